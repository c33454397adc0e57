"""Decoherence effects on golden-rule transitions in driven few-level systems."""
from .analytic import (OccupationBreakdown, adiabatic_limit, adiabatic_limit_fixed_start,
                       adiabatic_peak_drive, fgr_limit, fgr_transient, fixed_basis_dephasing_limit,
                       fixed_basis_limit, lorentzian_area, multi_stimulus_limit)
from .experiments import (SweepResult, SweepRow, SweepSpec, fig4_decomposition, peak_analysis,
                          run_sweep, sum_rule_integral, ws2_scenario)
from .model import (HBAR, K_B, AdiabaticFrame, DensityMatrix, LevelSystem, PropagationConfig,
                    StimulusTerm, adiabatic_frame, hamiltonian_at, nac_analytic, nac_numeric,
                    reduce_three_to_two)
from .propagate import (Trajectory, evolve, evolve_adiabatic, evolve_fixed_basis,
                        steady_occupation, steady_populations)

__version__ = "0.1.0"
