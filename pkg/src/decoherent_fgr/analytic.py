"""Closed-form final occupations for weakly driven two-level systems.

All evaluators take energies in eV, the damping ``eta`` in 1/fs and the
decoherence time ``tau`` in fs (``math.inf`` for none), and broadcast over
numpy arrays. They are second order in the coupling and warn when an
amplitude exceeds a tenth of the gap.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import HBAR, PERTURBATIVE_RATIO, PerturbativeValidityWarning


@dataclass(frozen=True)
class OccupationBreakdown:
    total: float
    per_stimulus: tuple[float, ...]
    interference: float

    def __post_init__(self):
        object.__setattr__(self, "per_stimulus", tuple(float(x) for x in self.per_stimulus))


def _rate(tau):
    tau = np.asarray(tau, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(np.isinf(tau), 0.0, 1.0 / tau)


def _warn_if_strong(v0, gap):
    if np.any(np.abs(np.asarray(v0)) > PERTURBATIVE_RATIO * np.abs(np.asarray(gap))):
        warnings.warn(
            f"amplitude/gap exceeds {PERTURBATIVE_RATIO}; closed form assumes weak coupling",
            PerturbativeValidityWarning, stacklevel=3)


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def fgr_transient(V0, gap, drive, eta, t):
    """|c2(t)|^2 from first-order perturbation theory with a damped drive."""
    _warn_if_strong(V0, gap)
    det = (np.asarray(gap) - np.asarray(drive)) / HBAR
    t = np.asarray(t, dtype=float)
    num = np.exp(-2 * eta * t) - 2 * np.exp(-eta * t) * np.cos(det * t) + 1
    return _scalar((np.asarray(V0) / HBAR) ** 2 * num / (det ** 2 + eta ** 2))


def fgr_limit(V0, gap, drive, eta):
    """Lorentzian t -> inf limit of ``fgr_transient``."""
    _warn_if_strong(V0, gap)
    det = (np.asarray(gap) - np.asarray(drive)) / HBAR
    return _scalar((np.asarray(V0) / HBAR) ** 2 / (det ** 2 + eta ** 2))


def fixed_basis_limit(V0, gap, drive, eta, tau=math.inf):
    """Lorentzian with the linewidth widened from eta to eta + 1/tau.

    The area of this curve shrinks with tau. Pure dephasing of the
    coherence in the fixed basis gives ``fixed_basis_dephasing_limit``
    instead, which keeps the area.
    """
    _warn_if_strong(V0, gap)
    det = (np.asarray(drive) - np.asarray(gap)) / HBAR
    width = eta + _rate(tau)
    return _scalar((np.asarray(V0) / HBAR) ** 2 / (det ** 2 + width ** 2))


def fixed_basis_dephasing_limit(V0, gap, drive, eta, tau=math.inf):
    """Second-order final occupation for the fixed-basis dephasing model.

    ``(V0/hbar)^2 (1 + 1/(tau eta)) / ((w - w12)^2 + (eta + 1/tau)^2)``;
    frequency-integrated it equals ``lorentzian_area`` for every tau.
    """
    g = _rate(tau)
    return _scalar(fixed_basis_limit(V0, gap, drive, eta, tau) * (1 + g / eta))


def adiabatic_limit(V0, gap, drive, eta, tau=math.inf):
    """Second-order final occupation when decoherence acts on eigenstates.

    ``(w V0 / (hbar w12))^2 (1 + 1/(tau eta)) / ((w - w12)^2 + (1/tau + eta)^2)``.
    Assumes the carrier starts in the lower adiabatic state.
    """
    _warn_if_strong(V0, gap)
    drive = np.asarray(drive)
    gap = np.asarray(gap)
    g = _rate(tau)
    det = (drive - gap) / HBAR
    pref = (drive * np.asarray(V0) / (HBAR * gap)) ** 2
    return _scalar(pref * (1 + g / eta) / (det ** 2 + (g + eta) ** 2))


def adiabatic_limit_fixed_start(V0, gap, drive, eta, tau=math.inf):
    """As ``adiabatic_limit`` but starting from the bare lower level.

    The bare level carries an initial adiabatic population (V0/gap)^2 and
    a coherence V0/gap. Their contribution is added, keeping the
    ``i eta`` part of the coupling; at tau = inf the result reduces to
    ``fgr_limit`` up to O(eta^2 / w12^2).
    """
    _warn_if_strong(V0, gap)
    drive = np.asarray(drive)
    gap = np.asarray(gap)
    g = _rate(tau)
    w = drive / HBAR
    det = (drive - gap) / HBAR
    width = eta + g
    c2 = (np.asarray(V0) / gap) ** 2
    num = (w ** 2 + eta ** 2) * (1 + g / eta) + width ** 2 + det ** 2 - 2 * w * det - 2 * eta * width
    return _scalar(c2 * num / (det ** 2 + width ** 2))


def second_order_occupation(rates: Sequence[complex], omegas: Sequence[float],
                            w12: float, eta: float, tau=math.inf) -> float:
    """Final upper-level population for D12' = (i w12 - g) D12 + i sum_s A_s e^{(i w_s - eta) t}.

    ``rates`` are the A_s in 1/fs, ``omegas`` the drive frequencies in
    rad/fs. Integrating the population equation to t = inf gives

        2 Re sum_{r,s} A_r* A_s / ((2 eta - i(w_s - w_r)) (eta + g + i(w_r - w12)))
    """
    a = np.asarray(rates, dtype=complex)
    w = np.asarray(omegas, dtype=float)
    width = eta + float(_rate(tau))
    beat = 2 * eta - 1j * (w[None, :] - w[:, None])
    res = width + 1j * (w[:, None] - w12)
    return float(2 * np.real(np.sum(np.conj(a)[:, None] * a[None, :] / (beat * res))))


def _merge(stimuli):
    merged: dict[float, float] = {}
    for v, q in stimuli:
        merged[float(q)] = merged.get(float(q), 0.0) + float(v)
    return [(v, q) for q, v in merged.items()]


def multi_stimulus_limit(stimuli: Sequence[tuple[float, float]], gap: float,
                         eta: float, tau=math.inf) -> OccupationBreakdown:
    """Adiabatic-basis final occupation for several drives ``(V_s, hbar w_s)``.

    Each drive alone contributes ``adiabatic_limit``; the interference is
    what the cross terms of ``second_order_occupation`` add on top. Drives
    sharing a frequency are merged by summing amplitudes.
    """
    stimuli = _merge(stimuli)
    for v, _ in stimuli:
        _warn_if_strong(v, gap)
    w12 = gap / HBAR
    rates = [(q / HBAR) * v / (HBAR * w12) for v, q in stimuli]
    omegas = [q / HBAR for _, q in stimuli]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PerturbativeValidityWarning)
        parts = [float(adiabatic_limit(v, gap, q, eta, tau)) for v, q in stimuli]
    if len(stimuli) == 1:
        return OccupationBreakdown(parts[0], parts, 0.0)
    total = second_order_occupation(rates, omegas, w12, eta, tau)
    return OccupationBreakdown(total, parts, total - sum(parts))


def lorentzian_area(V0, eta) -> float:
    """Integral of ``fgr_limit`` over the drive energy, in eV."""
    return math.pi * V0 ** 2 / (HBAR * eta)


def adiabatic_peak_drive(gap, eta, tau=math.inf) -> float:
    """Drive energy maximising ``adiabatic_limit`` at fixed gap (eV)."""
    w12 = gap / HBAR
    width = eta + float(_rate(tau))
    return HBAR * (w12 ** 2 + width ** 2) / w12
