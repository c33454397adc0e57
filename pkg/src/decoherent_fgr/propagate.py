"""Density-matrix propagation in the fixed and adiabatic bases.

Both propagators integrate with classic RK4 and damp off-diagonal elements
at the rate 1/tau in the basis they propagate in. Populations are never
damped directly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import _kernels
from .model import K_B, AmbiguousFrameError, DensityMatrix, LevelSystem, PropagationConfig

STEADY_TOL = 1e-8
STEADY_START = 10.0  # in units of 1/min(eta)
STEADY_WINDOW = 5.0
STEADY_CAP = 100.0


class IntegratorError(RuntimeError):
    pass


class NoSteadyStateError(RuntimeError):
    pass


@dataclass(frozen=True)
class Trajectory:
    """Recorded density matrices on a uniform time grid.

    For adiabatic runs ``frames`` holds the eigenvector matrix at each
    recorded time so the states can be rotated back to the fixed basis.
    """

    times: np.ndarray
    states: np.ndarray
    basis_tag: str
    config: PropagationConfig
    frames: Optional[np.ndarray] = None

    def __len__(self):
        return self.times.shape[0]

    def state(self, i: int) -> DensityMatrix:
        return DensityMatrix(self.states[i], self.basis_tag, float(self.times[i]))

    def fixed_basis_states(self) -> np.ndarray:
        if self.frames is None:
            return self.states
        u = self.frames
        return u @ self.states @ np.conj(np.swapaxes(u, 1, 2))

    def populations(self) -> np.ndarray:
        """Fixed-basis populations, shape (n_times, dim)."""
        return np.real(np.diagonal(self.fixed_basis_states(), axis1=1, axis2=2))

    def invariant_violations(self) -> dict:
        """Largest deviation from Hermiticity, unit trace and positivity."""
        d = self.states
        herm = float(np.max(np.abs(d - np.conj(np.swapaxes(d, 1, 2)))))
        trace = float(np.max(np.abs(np.trace(d, axis1=1, axis2=2) - 1.0)))
        herm_part = 0.5 * (d + np.conj(np.swapaxes(d, 1, 2)))
        min_eig = float(np.min(np.linalg.eigvalsh(herm_part)))
        return {"hermiticity": herm, "trace": trace, "min_eigenvalue": min_eig}


def _check_initial(initial: DensityMatrix, system: LevelSystem):
    if initial.basis_tag != "fixed":
        raise ValueError("initial state must be tagged with the fixed basis")
    if initial.entries.shape[0] != system.dim:
        raise ValueError("initial state dimension does not match the system")


def _n_steps(config: PropagationConfig) -> int:
    return int(math.ceil(config.t_max / config.dt - 1e-9))


def _kt(config: PropagationConfig) -> float:
    return -1.0 if config.detailed_balance is None else K_B * config.detailed_balance


def _adiabatic_start(system: LevelSystem, config: PropagationConfig,
                     initial: DensityMatrix) -> np.ndarray:
    e, u = _kernels.frame_at(*system.arrays, 0.0, np.eye(system.dim, dtype=complex), False)
    if _kernels.has_degeneracy(e, _kernels.DEGENERACY_TOL):
        raise AmbiguousFrameError("ambiguous frame: degenerate levels at t=0")
    if config.initial_frame == "adiabatic":
        return initial.entries.copy()
    return u.conj().T @ initial.entries @ u


def _raise_status(status: int):
    if status == _kernels.STATUS_TRACE_DRIFT:
        raise IntegratorError("integrator unstable, reduce dt")
    if status == _kernels.STATUS_AMBIGUOUS:
        raise AmbiguousFrameError("ambiguous frame: degenerate levels at t=0")
    if status == _kernels.STATUS_NO_STEADY_STATE:
        raise NoSteadyStateError("no steady state")


def evolve_fixed_basis(system: LevelSystem, config: PropagationConfig,
                       initial: DensityMatrix, stride: int = 1) -> Trajectory:
    """Integrate dD/dt = -(i/hbar)[H, D] - (1/tau) offdiag(D) up to t_max.

    Every ``stride``-th step is recorded.
    """
    _check_initial(initial, system)
    n = _n_steps(config)
    rec, _, k, status = _kernels.run_fixed(
        *system.arrays, system.hbar, config.dephasing_rate,
        initial.entries.copy(), config.dt, n, stride, config.readout_level, 0, 0, 0.0)
    _raise_status(status)
    times = config.dt * stride * np.arange(rec.shape[0])
    return Trajectory(times, rec, "fixed", config)


def evolve_adiabatic(system: LevelSystem, config: PropagationConfig,
                     initial_fixed: DensityMatrix, stride: int = 1) -> Trajectory:
    """Propagate in the instantaneous eigenbasis with numerical couplings.

    dD_ij/dt = -(i/hbar)(E_i - E_j) D_ij - [d, D]_ij - (1/tau)(1 - delta_ij) D_ij

    The returned states are in the tracked adiabatic basis; ``frames``
    carries the eigenvectors for rotating back.
    """
    _check_initial(initial_fixed, system)
    rho0 = _adiabatic_start(system, config, initial_fixed)
    n = _n_steps(config)
    rec, rec_u, _, _, k, status = _kernels.run_adiabatic(
        *system.arrays, system.hbar, config.dephasing_rate, _kt(config),
        rho0, config.dt, n, stride, config.readout_level, 0, 0, 0.0)
    _raise_status(status)
    times = config.dt * stride * np.arange(rec.shape[0])
    return Trajectory(times, rec, "adiabatic", config, rec_u)


def evolve(system: LevelSystem, config: PropagationConfig,
           initial: Optional[DensityMatrix] = None, stride: int = 1) -> Trajectory:
    if initial is None:
        initial = DensityMatrix.pure(system.dim, 0)
    if config.basis == "fixed":
        return evolve_fixed_basis(system, config, initial, stride)
    return evolve_adiabatic(system, config, initial, stride)


def steady_populations(system: LevelSystem, config: PropagationConfig,
                       initial: Optional[DensityMatrix] = None) -> np.ndarray:
    """Fixed-basis populations once the drive has died away.

    Runs until t >= max(t_max, 10/eta_min) and the readout population has
    moved by less than 1e-8 over the last 5/eta_min; gives up at
    100/eta_min.
    """
    if initial is None:
        initial = DensityMatrix.pure(system.dim, 0)
    _check_initial(initial, system)
    if not system.is_driven:
        return initial.populations
    eta = system.min_damping
    if not eta > 0:
        raise ValueError("steady occupation needs every stimulus damped (eta > 0)")
    if not 0 <= config.readout_level < system.dim:
        raise ValueError(f"readout_level {config.readout_level} outside {system.dim} levels")
    dt = config.dt
    win = max(1, int(round(STEADY_WINDOW / eta / dt)))
    nmin = int(math.ceil(max(config.t_max, STEADY_START / eta) / dt))
    nmax = int(math.ceil(STEADY_CAP / eta / dt))
    args = (config.readout_level, win, nmin, STEADY_TOL)
    if config.basis == "fixed":
        _, rho, _, status = _kernels.run_fixed(
            *system.arrays, system.hbar, config.dephasing_rate,
            initial.entries.copy(), dt, nmax, 0, *args)
        _raise_status(status)
        return np.real(np.diag(rho)).copy()
    rho0 = _adiabatic_start(system, config, initial)
    _, _, rho, u, _, status = _kernels.run_adiabatic(
        *system.arrays, system.hbar, config.dephasing_rate, _kt(config),
        rho0, dt, nmax, 0, *args)
    _raise_status(status)
    return np.real(np.diag(u @ rho @ u.conj().T)).copy()


def steady_occupation(system: LevelSystem, config: PropagationConfig,
                      initial: Optional[DensityMatrix] = None,
                      level: Optional[int] = None) -> float:
    """Final population of ``level`` (default: ``config.readout_level``)."""
    if level is not None and level != config.readout_level:
        config = replace(config, readout_level=level)
    return float(steady_populations(system, config, initial)[config.readout_level])
