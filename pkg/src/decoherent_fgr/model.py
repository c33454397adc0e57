"""Level systems, damped sinusoidal stimuli and adiabatic frames.

Units throughout: energies in eV, times in fs, rates in 1/fs. Angular
frequencies are derived as ``E / HBAR``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from functools import cached_property
from typing import ClassVar, Optional, Sequence

import numpy as np

from . import _kernels

HBAR = 0.6582119569  # eV fs
K_B = 8.617333262e-5  # eV / K

PERTURBATIVE_RATIO = 0.1
BASES = ("fixed", "adiabatic")


class PerturbativeValidityWarning(UserWarning):
    """Coupling amplitude is not small compared with the level gap."""


class AmbiguousFrameError(ValueError):
    pass


class ReductionError(ValueError):
    pass


@dataclass(frozen=True)
class StimulusTerm:
    """One damped drive ``V exp(i w t) exp(-eta t)`` on a level pair."""

    amplitude: float
    quantum: float
    damping: float = 1e-3
    target_pair: tuple[int, int] = (0, 1)

    def __post_init__(self):
        if not self.amplitude >= 0:
            raise ValueError(f"amplitude must be >= 0, got {self.amplitude}")
        if not self.quantum > 0:
            raise ValueError(f"quantum must be > 0, got {self.quantum}")
        if not self.damping >= 0:
            raise ValueError(f"damping must be >= 0, got {self.damping}")
        a, b = self.target_pair
        if a == b:
            raise ValueError(f"target_pair indices must differ, got {self.target_pair}")
        object.__setattr__(self, "target_pair", (int(a), int(b)))

    @property
    def omega(self) -> float:
        return self.quantum / HBAR


@dataclass(frozen=True)
class LevelSystem:
    levels: tuple[float, ...]
    stimuli: tuple[StimulusTerm, ...] = ()
    hbar: ClassVar[float] = HBAR

    def __post_init__(self):
        levels = tuple(float(x) for x in self.levels)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "stimuli", tuple(self.stimuli))
        n = len(levels)
        if not 2 <= n <= 3:
            raise ValueError(f"level count must be 2 or 3, got {n}")
        for s in self.stimuli:
            if max(s.target_pair) >= n or min(s.target_pair) < 0:
                raise ValueError(f"target_pair {s.target_pair} outside {n} levels")
        if n == 2 and not abs(levels[0] - levels[1]) > 0:
            raise ValueError("two-level gap must be > 0")

    @classmethod
    def two_level(cls, gap: float, stimuli: Sequence[StimulusTerm] = ()) -> "LevelSystem":
        return cls((0.0, gap), tuple(stimuli))

    @property
    def dim(self) -> int:
        return len(self.levels)

    @property
    def gap(self) -> float:
        """|e1 - e0|; for a doublet model this is the doublet's height."""
        return abs(self.levels[1] - self.levels[0])

    @property
    def min_damping(self) -> float:
        return min((s.damping for s in self.stimuli), default=math.inf)

    @property
    def is_driven(self) -> bool:
        return any(s.amplitude > 0 for s in self.stimuli)

    def check_perturbative(self, stacklevel: int = 2) -> bool:
        ok = all(s.amplitude <= PERTURBATIVE_RATIO * self.gap for s in self.stimuli)
        if not ok:
            warnings.warn(
                f"amplitude/gap exceeds {PERTURBATIVE_RATIO}; closed forms "
                "assume weak coupling",
                PerturbativeValidityWarning,
                stacklevel=stacklevel + 1,
            )
        return ok

    def with_stimuli(self, stimuli: Sequence[StimulusTerm]) -> "LevelSystem":
        return replace(self, stimuli=tuple(stimuli))

    def scaled(self, factor: float) -> "LevelSystem":
        """Energies and rates multiplied by ``factor``."""
        return LevelSystem(
            tuple(e * factor for e in self.levels),
            tuple(
                replace(s, amplitude=s.amplitude * factor,
                        quantum=s.quantum * factor, damping=s.damping * factor)
                for s in self.stimuli
            ),
        )

    @cached_property
    def arrays(self):
        """(levels, amps, omegas, etas, pair_a, pair_b) for the kernels."""
        st = self.stimuli
        return (
            np.array(self.levels, dtype=float),
            np.array([s.amplitude for s in st], dtype=float),
            np.array([s.omega for s in st], dtype=float),
            np.array([s.damping for s in st], dtype=float),
            np.array([s.target_pair[0] for s in st], dtype=np.int64),
            np.array([s.target_pair[1] for s in st], dtype=np.int64),
        )


@dataclass(frozen=True)
class PropagationConfig:
    """Integration settings.

    ``initial_frame`` decides how a fixed-basis initial state enters an
    adiabatic run: ``"fixed"`` rotates it into the t=0 eigenbasis,
    ``"adiabatic"`` puts its populations on the adiabatic states directly
    (the carrier starts in an eigenstate of the driven Hamiltonian).
    """

    dt: float = 0.05
    t_max: float = 1e4
    decoherence_time: float = math.inf
    basis: str = "fixed"
    detailed_balance: Optional[float] = None
    readout_level: int = 1
    initial_frame: str = "fixed"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if not self.t_max > 0:
            raise ValueError(f"t_max must be > 0, got {self.t_max}")
        if not self.decoherence_time > 0:
            raise ValueError(f"decoherence_time must be > 0 or inf, got {self.decoherence_time}")
        if self.basis not in BASES:
            raise ValueError(f"basis must be one of {BASES}, got {self.basis!r}")
        if self.initial_frame not in BASES:
            raise ValueError(f"initial_frame must be one of {BASES}, got {self.initial_frame!r}")
        if self.detailed_balance is not None and not self.detailed_balance > 0:
            raise ValueError(f"detailed_balance temperature must be > 0 K, got {self.detailed_balance}")
        if self.readout_level < 0:
            raise ValueError(f"readout_level must be >= 0, got {self.readout_level}")

    @property
    def dephasing_rate(self) -> float:
        return 0.0 if math.isinf(self.decoherence_time) else 1.0 / self.decoherence_time

    def scaled(self, factor: float) -> "PropagationConfig":
        """Times divided by ``factor`` (pairs with ``LevelSystem.scaled``)."""
        return replace(self, dt=self.dt / factor, t_max=self.t_max / factor,
                       decoherence_time=self.decoherence_time / factor)


@dataclass(frozen=True)
class DensityMatrix:
    entries: np.ndarray
    basis_tag: str = "fixed"
    time: float = 0.0

    HERMITIAN_TOL: ClassVar[float] = 1e-12
    TRACE_TOL: ClassVar[float] = 1e-10
    PSD_TOL: ClassVar[float] = 1e-9

    def __post_init__(self):
        d = np.array(self.entries, dtype=np.complex128)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValueError(f"density matrix must be square, got shape {d.shape}")
        if self.basis_tag not in BASES:
            raise ValueError(f"basis_tag must be one of {BASES}")
        if np.max(np.abs(d - d.conj().T)) > self.HERMITIAN_TOL:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(d) - 1.0) > self.TRACE_TOL:
            raise ValueError(f"density matrix trace is {np.trace(d).real}, not 1")
        if np.linalg.eigvalsh(d).min() < -self.PSD_TOL:
            raise ValueError("density matrix has a negative eigenvalue")
        d.setflags(write=False)
        object.__setattr__(self, "entries", d)

    @classmethod
    def pure(cls, dim: int, level: int = 0, basis_tag: str = "fixed") -> "DensityMatrix":
        d = np.zeros((dim, dim), dtype=np.complex128)
        d[level, level] = 1.0
        return cls(d, basis_tag)

    @property
    def populations(self) -> np.ndarray:
        return np.diag(self.entries).real.copy()


@dataclass(frozen=True)
class AdiabaticFrame:
    energies: np.ndarray
    eigenvectors: np.ndarray
    nac: np.ndarray
    time: float

    @property
    def dim(self) -> int:
        return self.energies.shape[0]


def hamiltonian_at(system: LevelSystem, t: float) -> np.ndarray:
    """H(t) in eV for the fixed basis."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    if math.isinf(t):
        if any(s.damping == 0 and s.amplitude > 0 for s in system.stimuli):
            raise ValueError("undamped drive has no t -> inf limit")
        return np.diag(np.array(system.levels, dtype=np.complex128))
    return _kernels.hamiltonian(*system.arrays, float(t))


def adiabatic_frame(system: LevelSystem, t: float,
                    previous: Optional[AdiabaticFrame] = None) -> AdiabaticFrame:
    """Eigenframe of H(t), tracked against ``previous`` when given.

    Without a reference the frame comes straight from the eigensolver
    (ascending energies) and the coupling is zero.
    """
    h = hamiltonian_at(system, t)
    e, u = _kernels.eigh_small(h)
    if previous is None:
        if _kernels.has_degeneracy(e, _kernels.DEGENERACY_TOL):
            raise AmbiguousFrameError("ambiguous frame: degenerate levels need a reference frame")
        return AdiabaticFrame(e, u, np.zeros_like(u), float(t))
    if previous.dim != system.dim:
        raise ValueError("reference frame has a different dimension")
    if not previous.time < t:
        raise ValueError("reference frame must precede t")
    _kernels.align_into(e, u, np.ascontiguousarray(previous.eigenvectors))
    frame = AdiabaticFrame(e, u, np.zeros_like(u), float(t))
    return AdiabaticFrame(e, u, nac_numeric(previous, frame), float(t))


def nac_numeric(frame_a: AdiabaticFrame, frame_b: AdiabaticFrame) -> np.ndarray:
    """Finite-difference coupling <phi_i|d phi_j/dt> between two frames (1/fs).

    Accurate to second order at the midpoint of the two frame times.
    """
    if frame_a.dim != frame_b.dim:
        raise ValueError("frames have different dimensions")
    h = frame_b.time - frame_a.time
    if not h > 0:
        raise ValueError("frame_b must be later than frame_a")
    return _kernels.nac_from_frames(np.ascontiguousarray(frame_a.eigenvectors),
                                    np.ascontiguousarray(frame_b.eigenvectors), h)


def nac_analytic(system: LevelSystem, t: float, numerator: float = 4.0) -> complex:
    """Closed-form off-diagonal coupling ``(w/2) sin(theta) exp(i w t)`` in 1/fs.

    ``sin(theta) = numerator * V / sqrt(4 V**2 + gap**2)`` with the damped
    amplitude ``V = V0 exp(-eta t)``. ``numerator=2`` is the small-coupling
    limit of diagonalising the 2x2 Hamiltonian exactly; the default 4 gives
    twice that magnitude.
    """
    if system.dim != 2 or len(system.stimuli) != 1:
        raise ValueError("needs a two-level system with exactly one stimulus")
    s = system.stimuli[0]
    v = s.amplitude * math.exp(-s.damping * t)
    sin_theta = numerator * v / math.sqrt(4 * v * v + system.gap ** 2)
    return 0.5 * s.omega * sin_theta * complex(math.cos(s.omega * t), math.sin(s.omega * t))


def reduce_three_to_two(three: LevelSystem, tol: float = 1e-9) -> LevelSystem:
    """Collapse a degenerate upper doublet onto its bright combination.

    Level 0 couples to levels 1 and 2 through pairs of identical stimuli.
    The symmetric combination carries coupling ``sqrt(2) V``; the
    antisymmetric one decouples and is dropped.
    """
    if three.dim != 3:
        raise ReductionError("no exact reduction: need three levels")
    e0, e1, e2 = three.levels
    if abs(e1 - e2) > tol:
        raise ReductionError("no exact reduction: upper levels not degenerate")
    by_level: dict[int, list] = {1: [], 2: []}
    for s in three.stimuli:
        a, b = sorted(s.target_pair)
        if a != 0:
            raise ReductionError("no exact reduction: coupling inside the doublet")
        by_level[b].append((s.quantum, s.damping, s.amplitude))
    if sorted(by_level[1]) != sorted(by_level[2]):
        raise ReductionError("no exact reduction: asymmetric couplings")
    stimuli = [
        StimulusTerm(amp * math.sqrt(2.0), q, eta, (0, 1))
        for q, eta, amp in sorted(by_level[1])
    ]
    return LevelSystem((e0, e1), tuple(stimuli))


def three_level_doublet(gap: float, stimuli: Sequence[StimulusTerm],
                        split_amplitude: bool = True) -> LevelSystem:
    """Lower level coupled to a degenerate pair at ``gap``.

    With ``split_amplitude`` each branch gets ``V / sqrt(2)`` so that
    ``reduce_three_to_two`` returns the two-level system built from
    ``stimuli``.
    """
    f = 1 / math.sqrt(2.0) if split_amplitude else 1.0
    terms = []
    for s in stimuli:
        for b in (1, 2):
            terms.append(replace(s, amplitude=s.amplitude * f, target_pair=(0, b)))
    return LevelSystem((0.0, gap, gap), tuple(terms))
