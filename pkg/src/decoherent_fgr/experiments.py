"""Parameter sweeps, sum-rule and peak metrics, and the bundled scenarios."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from . import analytic
from .analytic import OccupationBreakdown
from .model import (AmbiguousFrameError, DensityMatrix, LevelSystem, PropagationConfig,
                    StimulusTerm, reduce_three_to_two, three_level_doublet)
from .propagate import IntegratorError, NoSteadyStateError, steady_populations

VARIABLES = ("drive_energy", "gap_energy", "decoherence_time")
ANALYTIC_METHODS = ("fgr", "fixed_lorentzian", "fixed_dephasing", "adiabatic_analytic",
                    "adiabatic_fixed_start", "multi_analytic")
NUMERIC_METHODS = {"fixed_numeric": "fixed", "adiabatic_numeric": "adiabatic"}
METHODS = ANALYTIC_METHODS + tuple(NUMERIC_METHODS)
SWEPT_COLUMN = {"drive_energy": "hw_eV", "gap_energy": "gap_eV", "decoherence_time": "tau_fs"}

# TLS-like parameters
TLS_GAP = 0.03
TLS_V = 1e-4
TLS_ETA = 1e-3
FIG1_TAUS = (math.inf, 1000.0, 100.0, 10.0)
FIG4_STIMULI = ((1e-5, 0.047), (1e-4, 0.020))
FIG4_GAP = 0.056
WS2_STIMULI = ((0.007, 0.046), (0.016, 0.020))
WS2_GAPS = {"tensile": 0.056, "stress_free": 0.067, "compressed": 0.12}

_RUNTIME_ERRORS = (NoSteadyStateError, IntegratorError, AmbiguousFrameError, ValueError)


class SweepError(RuntimeError):
    pass


class TruncatedIntegralError(ValueError):
    pass


class PeakNotBracketedError(ValueError):
    pass


def default_tau_grid(num: int = 25) -> np.ndarray:
    """Log-spaced decoherence times from 1 fs to 1e4 fs."""
    return np.logspace(0.0, 4.0, num)


def drive_grid(gap: float = TLS_GAP, half_width: float = 0.01, num: int = 81) -> np.ndarray:
    return np.linspace(gap - half_width, gap + half_width, num)


def lorentzian_grid(center: float, width: float, lo: float, hi: float, num: int) -> np.ndarray:
    """Points ``center + width tan(u)`` with ``u`` uniform, clipped to [lo, hi].

    Points crowd where a Lorentzian of half width ``width`` varies, so a
    hundred or so cover a long tail; trapezoidal areas on it land within
    about 1% for a tail of ~100 widths.
    """
    u = np.linspace(math.atan((lo - center) / width), math.atan((hi - center) / width), num)
    return center + width * np.tan(u)


@dataclass(frozen=True)
class SweepSpec:
    """One swept variable over ``grid`` with the methods to evaluate.

    ``drive_energy`` sets the quantum of every stimulus, ``gap_energy``
    moves the upper level (or doublet) and ``decoherence_time`` sets tau.
    """

    variable: str
    grid: tuple[float, ...]
    base_system: LevelSystem
    base_config: PropagationConfig = field(default_factory=PropagationConfig)
    methods: tuple[str, ...] = ("fgr", "fixed_numeric")

    def __post_init__(self):
        grid = tuple(float(x) for x in self.grid)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.variable not in VARIABLES:
            raise ValueError(f"variable must be one of {VARIABLES}, got {self.variable!r}")
        if not grid:
            raise ValueError("grid must be non-empty")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("grid must be strictly increasing")
        if self.variable != "decoherence_time" and grid[0] <= 0:
            raise ValueError("energy grid values must be > 0")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown methods {unknown}; choose from {METHODS}")
        if len(set(self.methods)) != len(self.methods):
            raise ValueError("methods must not repeat")

    def point(self, value: float) -> tuple[LevelSystem, PropagationConfig]:
        system, config = self.base_system, self.base_config
        if self.variable == "drive_energy":
            system = system.with_stimuli([replace(s, quantum=value) for s in system.stimuli])
        elif self.variable == "gap_energy":
            e0 = system.levels[0]
            system = LevelSystem((e0,) + (e0 + value,) * (system.dim - 1), system.stimuli)
        else:
            config = replace(config, decoherence_time=value)
        return system, config


@dataclass(frozen=True)
class SweepRow:
    value: float
    occupations: dict
    breakdown: Optional[OccupationBreakdown] = None
    errors: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SweepResult:
    spec: SweepSpec
    rows: tuple[SweepRow, ...]
    columns: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))
        if not self.columns:
            object.__setattr__(self, "columns", self.spec.methods)

    @property
    def grid(self) -> np.ndarray:
        return np.array([r.value for r in self.rows])

    def column(self, name: str) -> np.ndarray:
        if name not in self.columns:
            raise KeyError(f"no column {name!r}; have {self.columns}")
        return np.array([r.occupations.get(name, math.nan) for r in self.rows])


def upper_occupation(populations: np.ndarray, readout_level: int) -> float:
    """Readout population; for three levels the two upper levels together."""
    if populations.shape[0] == 3:
        return float(populations[1] + populations[2])
    return float(populations[readout_level])


def _single_tls(system: LevelSystem, method: str):
    if system.dim == 3:
        system = reduce_three_to_two(system)
    if len(system.stimuli) != 1:
        raise ValueError(f"{method} needs exactly one stimulus; use multi_analytic")
    s = system.stimuli[0]
    return s.amplitude, system.gap, s.quantum, s.damping


def _multi(system: LevelSystem, config: PropagationConfig) -> OccupationBreakdown:
    if system.dim == 3:
        system = reduce_three_to_two(system)
    etas = {s.damping for s in system.stimuli}
    if len(etas) != 1:
        raise ValueError("multi_analytic needs one common damping")
    pairs = [(s.amplitude, s.quantum) for s in system.stimuli]
    return analytic.multi_stimulus_limit(pairs, system.gap, etas.pop(), config.decoherence_time)


def evaluate(method: str, system: LevelSystem, config: PropagationConfig,
             initial: Optional[DensityMatrix] = None) -> tuple[float, Optional[OccupationBreakdown]]:
    """Final upper-level occupation of one method at one parameter point."""
    tau = config.decoherence_time
    if method in NUMERIC_METHODS:
        cfg = replace(config, basis=NUMERIC_METHODS[method])
        return upper_occupation(steady_populations(system, cfg, initial), cfg.readout_level), None
    if method == "multi_analytic":
        b = _multi(system, config)
        return b.total, b
    v, gap, drive, eta = _single_tls(system, method)
    if method == "fgr":
        return analytic.fgr_limit(v, gap, drive, eta), None
    if method == "fixed_lorentzian":
        return analytic.fixed_basis_limit(v, gap, drive, eta, tau), None
    if method == "fixed_dephasing":
        return analytic.fixed_basis_dephasing_limit(v, gap, drive, eta, tau), None
    if method == "adiabatic_analytic":
        return analytic.adiabatic_limit(v, gap, drive, eta, tau), None
    if method == "adiabatic_fixed_start":
        return analytic.adiabatic_limit_fixed_start(v, gap, drive, eta, tau), None
    raise ValueError(f"unknown method {method!r}")


def _run_point(spec: SweepSpec, value: float) -> SweepRow:
    system, config = spec.point(value)
    occ, errors, breakdown = {}, {}, None
    for m in spec.methods:
        try:
            occ[m], b = evaluate(m, system, config)
            breakdown = b if b is not None else breakdown
        except _RUNTIME_ERRORS as exc:
            occ[m] = math.nan
            errors[m] = f"{type(exc).__name__}: {exc}"
    return SweepRow(value, occ, breakdown, errors)


def _workers(threads: int) -> int:
    if threads < 0:
        raise ValueError("threads must be >= 0")
    return threads or os.cpu_count() or 1


def run_sweep(spec: SweepSpec, threads: int = 1) -> SweepResult:
    """Evaluate every method at every grid point.

    Points run concurrently when ``threads`` > 1 (0 picks the CPU count);
    rows come back in grid order. A failing method is recorded in the
    row's ``errors`` and its value set to NaN; if nothing succeeds the
    sweep raises ``SweepError``.
    """
    n = _workers(threads)
    if n == 1 or len(spec.grid) == 1:
        rows = [_run_point(spec, v) for v in spec.grid]
    else:
        with ThreadPoolExecutor(max_workers=n) as pool:
            rows = list(pool.map(lambda v: _run_point(spec, v), spec.grid))
    if spec.methods and all(len(r.errors) == len(spec.methods) for r in rows):
        raise SweepError(f"every grid point failed; first error: {next(iter(rows[0].errors.values()))}")
    return SweepResult(spec, rows)


def merge_results(results: Sequence[SweepResult], suffixes: Sequence[str]) -> SweepResult:
    """Join sweeps over the same grid, suffixing each one's columns."""
    base = results[0]
    for r in results[1:]:
        if not np.array_equal(r.grid, base.grid):
            raise ValueError("merged sweeps must share a grid")
    rows, columns = [], []
    for r, sfx in zip(results, suffixes):
        columns += [f"{c}_{sfx}" if sfx else c for c in r.columns]
    for i, row in enumerate(base.rows):
        occ, errs, breakdown = {}, {}, None
        for r, sfx in zip(results, suffixes):
            src = r.rows[i]
            for c in r.columns:
                key = f"{c}_{sfx}" if sfx else c
                occ[key] = src.occupations.get(c, math.nan)
                if c in src.errors:
                    errs[key] = src.errors[c]
            breakdown = breakdown or src.breakdown
        rows.append(SweepRow(row.value, occ, breakdown, errs))
    return SweepResult(base.spec, rows, tuple(columns))


def tau_label(tau: float) -> str:
    return "tauinf" if math.isinf(tau) else f"tau{tau:g}"


# metrics

def sum_rule_integral(result: SweepResult, method: str, tail_fraction: float = 0.01) -> float:
    """Trapezoidal area under the occupation-vs-drive curve, in eV.

    Raises ``TruncatedIntegralError`` when either end of the grid still
    carries more than ``tail_fraction`` of the peak.
    """
    if result.spec.variable != "drive_energy":
        raise ValueError("sum rule needs a drive_energy sweep")
    x, y = result.grid, result.column(method)
    if not np.all(np.isfinite(y)):
        raise ValueError(f"{method} has failed points; cannot integrate")
    peak = float(np.max(y))
    if peak > 0 and max(y[0], y[-1]) > tail_fraction * peak:
        raise TruncatedIntegralError(
            f"truncated integral: tail {max(y[0], y[-1]):.3g} exceeds "
            f"{tail_fraction:g} of peak {peak:.3g}")
    return float(np.trapezoid(y, x))


@dataclass(frozen=True)
class PeakInfo:
    position: float
    height: float
    fwhm: float
    asymmetry: float


def _default_center(result: SweepResult) -> float:
    spec = result.spec
    if spec.variable == "drive_energy":
        return spec.base_system.gap
    if spec.variable == "gap_energy":
        return spec.base_system.stimuli[0].quantum
    raise ValueError("asymmetry needs an energy sweep or an explicit center")


def _half_crossing(x, y, i0, step, half):
    i = i0
    while 0 <= i + step < len(y):
        j = i + step
        if y[j] <= half:
            return x[i] + (half - y[i]) * (x[j] - x[i]) / (y[j] - y[i])
        i = j
    return math.nan


def _area(x, y, lo, hi):
    xs = np.concatenate(([lo], x[(x > lo) & (x < hi)], [hi]))
    return float(np.trapezoid(np.interp(xs, x, y), xs))


def asymmetry(result: SweepResult, method: str, center: Optional[float] = None) -> float:
    """(area above ``center`` - area below) / total area over the grid.

    ``center`` defaults to the resonance: the gap for drive sweeps, the
    drive for gap sweeps.
    """
    x, y = result.grid, result.column(method)
    c = _default_center(result) if center is None else center
    below = _area(x, y, x[0], c) if c > x[0] else 0.0
    above = _area(x, y, c, x[-1]) if c < x[-1] else 0.0
    total = below + above
    return float((above - below) / total) if total > 0 else 0.0


def peak_analysis(result: SweepResult, method: str, center: Optional[float] = None) -> PeakInfo:
    """Peak position (3-point parabola), height, FWHM and ``asymmetry``.

    FWHM is NaN when the curve does not fall to half height on both sides.
    """
    x, y = result.grid, result.column(method)
    i = int(np.argmax(y))
    if i == 0 or i == len(y) - 1:
        raise PeakNotBracketedError(f"peak not bracketed: maximum at grid edge x={x[i]:g}")
    x0, x1, x2 = x[i - 1:i + 2]
    y0, y1, y2 = y[i - 1:i + 2]
    # parabola through three (possibly unequal) points
    d01, d12, d02 = x1 - x0, x2 - x1, x2 - x0
    a = (y2 - y1) / (d12 * d02) - (y1 - y0) / (d01 * d02)
    b = (y1 - y0) / d01 - a * (x0 + x1)
    if a < 0:
        pos = -b / (2 * a)
        height = y1 + (pos - x1) * (b + a * (pos + x1))
    else:
        pos, height = x1, y1
    half = height / 2
    left, right = _half_crossing(x, y, i, -1, half), _half_crossing(x, y, i, 1, half)
    return PeakInfo(float(pos), float(height), float(right - left),
                    asymmetry(result, method, center))


def sharpness(values: np.ndarray) -> float:
    """max / median of a curve."""
    return float(np.max(values) / np.median(values))


# scenarios

def reference_tls(drive: float = TLS_GAP, gap: float = TLS_GAP, amplitude: float = TLS_V,
              eta: float = TLS_ETA) -> LevelSystem:
    return LevelSystem.two_level(gap, [StimulusTerm(amplitude, drive, eta)])


def fig4_system(eta: float = TLS_ETA) -> LevelSystem:
    return LevelSystem.two_level(FIG4_GAP, [StimulusTerm(v, q, eta) for v, q in FIG4_STIMULI])


def ws2_system(preset: str, eta: float = TLS_ETA, three_level: bool = False,
               coupling_scale: float = 1.0) -> LevelSystem:
    """Effective WS2 model: two phonon drives across the strain-dependent gap.

    The three-level variant is a lower level coupled to a degenerate
    doublet, with amplitudes split so it reduces to the two-level model.
    """
    if preset not in WS2_GAPS:
        raise ValueError(f"preset must be one of {tuple(WS2_GAPS)}, got {preset!r}")
    stimuli = [StimulusTerm(v * coupling_scale, q, eta) for v, q in WS2_STIMULI]
    gap = WS2_GAPS[preset]
    if three_level:
        return three_level_doublet(gap, stimuli)
    return LevelSystem.two_level(gap, stimuli)


def ws2_scenario(preset: str, tau_grid: Optional[Sequence[float]] = None,
                 basis: str = "adiabatic", eta: float = TLS_ETA,
                 three_level: bool = True, coupling_scale: float = 1.0,
                 initial_frame: str = "fixed", threads: int = 1) -> SweepResult:
    """Occupation-vs-tau for a strain preset.

    Columns are the two-level result and, with ``three_level``, the
    doublet model (both upper levels summed, suffix ``3level``).
    """
    grid = tuple(default_tau_grid() if tau_grid is None else tau_grid)
    method = "adiabatic_numeric" if basis == "adiabatic" else "fixed_numeric"
    cfg = PropagationConfig(basis=basis, initial_frame=initial_frame)
    results, suffixes = [], []
    for tl in (False, True) if three_level else (False,):
        system = ws2_system(preset, eta, tl, coupling_scale)
        results.append(run_sweep(SweepSpec("decoherence_time", grid, system, cfg, (method,)), threads))
        suffixes.append("3level" if tl else "")
    return merge_results(results, suffixes)


def fig4_decomposition(tau_grid: Optional[Sequence[float]] = None, threads: int = 1,
                       initial_frame: str = "adiabatic") -> SweepResult:
    """Two-phonon drive: numerical total next to the analytic breakdown."""
    grid = tuple(default_tau_grid() if tau_grid is None else tau_grid)
    cfg = PropagationConfig(basis="adiabatic", initial_frame=initial_frame)
    spec = SweepSpec("decoherence_time", grid, fig4_system(), cfg,
                     ("adiabatic_numeric", "multi_analytic"))
    return run_sweep(spec, threads)


def _family(make: Callable[[float], SweepSpec], taus, threads) -> SweepResult:
    results = [run_sweep(make(t), threads) for t in taus]
    return merge_results(results, [tau_label(t) for t in taus])


def figure(name: str, threads: int = 1, points: Optional[int] = None) -> SweepResult:
    """Bundled replication runs: "1a", "1b", "2" and "4"."""
    if name == "1a":
        grid = tuple(drive_grid(num=points or 81))
        return _family(lambda t: SweepSpec(
            "drive_energy", grid, reference_tls(), PropagationConfig(decoherence_time=t),
            ("fgr", "fixed_lorentzian", "fixed_dephasing", "fixed_numeric")), FIG1_TAUS, threads)
    if name == "1b":
        grid = tuple(drive_grid(num=points or 81))
        return _family(lambda t: SweepSpec(
            "drive_energy", grid, reference_tls(),
            PropagationConfig(decoherence_time=t, basis="adiabatic", initial_frame="adiabatic"),
            ("adiabatic_analytic", "adiabatic_numeric")), FIG1_TAUS, threads)
    if name == "2":
        grid = tuple(np.linspace(0.005, 0.045, points or 81))
        return _family(lambda t: SweepSpec(
            "gap_energy", grid, reference_tls(),
            PropagationConfig(decoherence_time=t, basis="adiabatic", initial_frame="adiabatic"),
            ("fgr", "adiabatic_analytic", "adiabatic_numeric")), FIG1_TAUS, threads)
    if name == "4":
        return fig4_decomposition(default_tau_grid(points or 25), threads)
    raise ValueError(f"unknown figure {name!r}; choose from 1a, 1b, 2, 4")


FIGURES = ("1a", "1b", "2", "4")
