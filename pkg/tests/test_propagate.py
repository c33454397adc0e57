import math
from dataclasses import replace

import numpy as np
import pytest

from decoherent_fgr import analytic
from decoherent_fgr.experiments import ws2_system
from decoherent_fgr.model import (DensityMatrix, LevelSystem, PropagationConfig, StimulusTerm,
                                  reduce_three_to_two, three_level_doublet)
from decoherent_fgr.propagate import (IntegratorError, NoSteadyStateError, evolve,
                                      evolve_adiabatic, evolve_fixed_basis, steady_occupation,
                                      steady_populations)


def tls(v=1e-4, drive=0.03, eta=1e-3, gap=0.03):
    return LevelSystem.two_level(gap, [StimulusTerm(v, drive, eta)])


START = DensityMatrix.pure(2, 0)


class TestTrajectories:
    @pytest.mark.parametrize("basis", ["fixed", "adiabatic"])
    @pytest.mark.parametrize("tau", [math.inf, 100.0, 10.0])
    def test_invariants_every_step(self, basis, tau):
        system = LevelSystem((0.0, 0.03, 0.05), (StimulusTerm(2e-3, 0.03, 5e-3, (0, 1)),
                                                 StimulusTerm(2e-3, 0.05, 5e-3, (0, 2))))
        cfg = PropagationConfig(t_max=1500.0, decoherence_time=tau, basis=basis)
        traj = evolve(system, cfg, DensityMatrix.pure(3, 0), stride=1)
        bad = traj.invariant_violations()
        assert bad["trace"] < 1e-10
        assert bad["hermiticity"] < 1e-12
        assert bad["min_eigenvalue"] > -1e-9
        assert np.all(np.diff(traj.times) > 0)
        np.testing.assert_allclose(np.diff(traj.times), cfg.dt, rtol=1e-9)
        fixed = traj.fixed_basis_states()
        assert np.max(np.abs(np.trace(fixed, axis1=1, axis2=2) - 1)) < 1e-10

    @pytest.mark.parametrize("tau", [math.inf, 50.0])
    def test_undriven_is_frozen(self, tau):
        traj = evolve_fixed_basis(tls(v=0.0), PropagationConfig(t_max=500.0, decoherence_time=tau),
                                  START, stride=100)
        for d in traj.states:
            np.testing.assert_array_equal(d, START.entries)
        assert steady_occupation(tls(v=0.0), PropagationConfig()) == 0.0

    def test_transient_matches_first_order(self):
        cfg = PropagationConfig(t_max=1000.0)
        traj = evolve_fixed_basis(tls(), cfg, START, stride=1000)
        want = analytic.fgr_transient(1e-4, 0.03, 0.03, 1e-3, 1000.0)
        assert want == pytest.approx(9.22e-3, rel=2e-3)
        assert traj.populations()[-1, 1] == pytest.approx(want, rel=1e-2)

    def test_initial_state_checks(self):
        with pytest.raises(ValueError):
            evolve(tls(), PropagationConfig(), DensityMatrix.pure(2, 0, "adiabatic"))
        with pytest.raises(ValueError):
            evolve(tls(), PropagationConfig(), DensityMatrix.pure(3, 0))
        with pytest.raises(ValueError):
            DensityMatrix(np.diag([0.7, 0.7]).astype(complex))

    @pytest.mark.parametrize("basis", ["fixed", "adiabatic"])
    def test_unstable_step_detected(self, basis):
        with pytest.raises(IntegratorError, match="reduce dt"):
            evolve(tls(), PropagationConfig(dt=100.0, t_max=1e5, basis=basis))

    def test_adiabatic_frames_rotate_back(self):
        cfg = PropagationConfig(t_max=300.0, basis="adiabatic")
        traj = evolve_adiabatic(tls(v=1e-3), cfg, START, stride=50)
        ref = evolve_fixed_basis(tls(v=1e-3), replace(cfg, basis="fixed"), START, stride=50)
        np.testing.assert_allclose(traj.populations(), ref.populations(), atol=1e-7)


class TestSteadyState:
    def test_fixed_resonance(self):
        got = steady_occupation(tls(), PropagationConfig())
        # the drive is weak but not infinitesimal: exact value is sin^2(V/(hbar eta))
        assert got == pytest.approx(math.sin(1e-4 / 0.6582119569 / 1e-3) ** 2, rel=1e-4)
        assert got == pytest.approx(0.02308, rel=1e-2)

    def test_adiabatic_tau10(self):
        cfg = PropagationConfig(decoherence_time=10.0, basis="adiabatic", initial_frame="adiabatic")
        got = steady_occupation(tls(), cfg)
        want = analytic.adiabatic_limit(1e-4, 0.03, 0.03, 1e-3, 10.0)
        assert want == pytest.approx(2.286e-4, rel=1e-3)
        assert got == pytest.approx(want, rel=2e-2)

    def test_undamped_drive_rejected(self):
        with pytest.raises(ValueError):
            steady_occupation(tls(eta=0.0), PropagationConfig())

    def test_no_steady_state(self, monkeypatch):
        from decoherent_fgr import propagate
        monkeypatch.setattr(propagate, "STEADY_TOL", 0.0)
        with pytest.raises(NoSteadyStateError, match="no steady state"):
            steady_occupation(tls(eta=0.05), PropagationConfig(t_max=10.0))

    def test_level_argument(self):
        cfg = PropagationConfig(decoherence_time=100.0)
        p = steady_populations(tls(), cfg)
        assert steady_occupation(tls(), cfg, level=0) == pytest.approx(p[0], abs=1e-15)
        assert p.sum() == pytest.approx(1.0, abs=1e-10)


class TestConvergenceAndScaling:
    @pytest.mark.parametrize("basis, tau", [("fixed", math.inf), ("fixed", 100.0),
                                            ("adiabatic", 100.0), ("adiabatic", 10.0)])
    def test_dt_halving(self, basis, tau):
        system = tls(drive=0.032)
        cfg = PropagationConfig(decoherence_time=tau, basis=basis, initial_frame="adiabatic")
        coarse = steady_occupation(system, cfg)
        fine = steady_occupation(system, replace(cfg, dt=cfg.dt / 2))
        assert abs(coarse - fine) / fine < 1e-6

    @pytest.mark.parametrize("lam", [2.0, 0.5])
    @pytest.mark.parametrize("basis", ["fixed", "adiabatic"])
    def test_scaling_rule(self, lam, basis):
        system = tls(drive=0.031)
        cfg = PropagationConfig(t_max=3000.0, decoherence_time=100.0, basis=basis)
        a = evolve(system, cfg, stride=200).populations()
        b = evolve(system.scaled(lam), cfg.scaled(lam), stride=200).populations()
        np.testing.assert_allclose(b, a, atol=1e-10)


class TestDetailedBalance:
    def test_fixed_basis_ignores_temperature(self):
        base = PropagationConfig(decoherence_time=100.0)
        ref = steady_occupation(tls(), base)
        for temp in (10.0, 300.0, 1e5):
            cfg = PropagationConfig(decoherence_time=100.0, detailed_balance=temp)
            assert steady_occupation(tls(), cfg) == ref

    def test_high_temperature_limit_is_off(self):
        kw = dict(decoherence_time=100.0, basis="adiabatic")
        off = steady_occupation(tls(), PropagationConfig(**kw))
        hot = steady_occupation(tls(), PropagationConfig(detailed_balance=1e12, **kw))
        assert hot == pytest.approx(off, rel=1e-6)

    def test_low_temperature_suppresses_absorption(self):
        kw = dict(decoherence_time=100.0, basis="adiabatic")
        off = steady_occupation(tls(), PropagationConfig(**kw))
        cold = steady_occupation(tls(), PropagationConfig(detailed_balance=30.0, **kw))
        assert cold < off


class TestThreeLevel:
    @pytest.mark.parametrize("basis, tau", [("adiabatic", 100.0), ("adiabatic", math.inf),
                                            ("fixed", math.inf)])
    def test_reduction_equivalence(self, basis, tau):
        stimuli = [StimulusTerm(0.004, 0.05, 1e-3)]
        three = three_level_doublet(0.056, stimuli)
        two = reduce_three_to_two(three)
        cfg = PropagationConfig(t_max=4000.0, decoherence_time=tau, basis=basis)
        p3 = evolve(three, cfg, DensityMatrix.pure(3, 0), stride=100).populations()[:, 0]
        p2 = evolve(two, cfg, DensityMatrix.pure(2, 0), stride=100).populations()[:, 0]
        depleted = 1 - p2
        assert np.max(depleted) > 1e-3
        np.testing.assert_allclose(1 - p3, depleted, rtol=1e-2, atol=1e-9)

    def test_fixed_basis_dephasing_breaks_reduction(self):
        # dephasing between the degenerate pair mixes in the dark state
        stimuli = [StimulusTerm(0.004, 0.05, 1e-3)]
        three = three_level_doublet(0.056, stimuli)
        cfg = PropagationConfig(decoherence_time=100.0)
        a = steady_populations(three, cfg, DensityMatrix.pure(3, 0))[0]
        b = steady_populations(reduce_three_to_two(three), cfg)[0]
        assert abs((1 - a) - (1 - b)) / (1 - b) > 0.05

    @pytest.mark.parametrize("tau", [10.0, 100.0])
    def test_large_coupling_saturation(self, tau):
        cfg = PropagationConfig(decoherence_time=tau)
        three = steady_populations(ws2_system("tensile", three_level=True, coupling_scale=35.0),
                                   cfg, DensityMatrix.pure(3, 0))
        two = steady_populations(ws2_system("tensile", coupling_scale=35.0), cfg)
        np.testing.assert_allclose(three, [1 / 3] * 3, rtol=2e-2)
        assert two[1] == pytest.approx(0.5, rel=2e-2)
