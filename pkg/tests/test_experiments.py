import math

import numpy as np
import pytest

from decoherent_fgr import analytic
from decoherent_fgr import experiments as ex
from decoherent_fgr.model import LevelSystem, PropagationConfig, StimulusTerm

V, GAP, ETA = 1e-4, 0.03, 1e-3


def spec(variable="drive_energy", grid=(0.03,), methods=("fgr", "fixed_numeric"), **cfg):
    return ex.SweepSpec(variable, grid, ex.reference_tls(), PropagationConfig(**cfg), methods)


class TestSpec:
    @pytest.mark.parametrize("kwargs", [
        dict(grid=()),
        dict(grid=(0.03, 0.02)),
        dict(grid=(0.03, 0.03)),
        dict(methods=("eq4",)),
        dict(methods=("fgr", "fgr")),
        dict(variable="temperature"),
        dict(grid=(-0.01, 0.03)),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            spec(**kwargs)

    def test_point_application(self):
        s = spec()
        system, _ = s.point(0.025)
        assert system.stimuli[0].quantum == 0.025
        system, _ = ex.SweepSpec("gap_energy", (0.02,), ex.reference_tls(), PropagationConfig()).point(0.02)
        assert system.levels == (0.0, 0.02)
        _, cfg = ex.SweepSpec("decoherence_time", (5.0,), ex.reference_tls()).point(5.0)
        assert cfg.decoherence_time == 5.0

    def test_gap_sweep_moves_doublet(self):
        three = ex.ws2_system("tensile", three_level=True)
        s = ex.SweepSpec("gap_energy", (0.05,), three, PropagationConfig(), ("fgr",))
        assert s.point(0.05)[0].levels == (0.0, 0.05, 0.05)


class TestRunSweep:
    def test_resonance_point(self):
        row = ex.run_sweep(spec()).rows[0]
        assert row.occupations["fgr"] == pytest.approx(0.02308, rel=1e-3)
        assert row.occupations["fixed_numeric"] == pytest.approx(row.occupations["fgr"], rel=1e-2)

    def test_uncoupled(self):
        system = LevelSystem.two_level(GAP, [StimulusTerm(0.0, 0.03, ETA)])
        s = ex.SweepSpec("drive_energy", (0.03,), system, PropagationConfig(),
                         ("fgr", "fixed_lorentzian", "adiabatic_analytic", "fixed_numeric",
                          "adiabatic_numeric"))
        row = ex.run_sweep(s).rows[0]
        assert all(v == 0.0 for v in row.occupations.values())

    def test_errors_are_per_row(self):
        s = ex.SweepSpec("drive_energy", (0.02, 0.03), ex.fig4_system(), PropagationConfig(),
                         ("fgr", "multi_analytic"))
        result = ex.run_sweep(s)
        for row in result.rows:
            assert "fgr" in row.errors and math.isnan(row.occupations["fgr"])
            assert row.breakdown is not None

    def test_total_failure(self):
        s = ex.SweepSpec("drive_energy", (0.02, 0.03), ex.fig4_system(), PropagationConfig(),
                         ("fgr",))
        with pytest.raises(ex.SweepError):
            ex.run_sweep(s)

    def test_deterministic_and_thread_independent(self):
        s = ex.SweepSpec("decoherence_time", tuple(ex.default_tau_grid(5)), ex.fig4_system(),
                         PropagationConfig(basis="adiabatic"), ("adiabatic_numeric", "multi_analytic"))
        a = ex.run_sweep(s, threads=1)
        b = ex.run_sweep(s, threads=1)
        c = ex.run_sweep(s, threads=3)
        for ra, rb, rc in zip(a.rows, b.rows, c.rows):
            assert ra == rb == rc
        assert [r.value for r in c.rows] == list(s.grid)

    def test_negative_threads(self):
        with pytest.raises(ValueError):
            ex.run_sweep(spec(), threads=-1)

    def test_merge(self):
        a = ex.run_sweep(spec(methods=("fgr",)))
        b = ex.run_sweep(spec(methods=("fixed_lorentzian",), decoherence_time=100.0))
        m = ex.merge_results([a, b], ["tauinf", "tau100"])
        assert m.columns == ("fgr_tauinf", "fixed_lorentzian_tau100")
        assert m.column("fgr_tauinf")[0] == a.column("fgr")[0]
        with pytest.raises(KeyError):
            m.column("fgr")


class TestSumRule:
    def test_lorentzian_area(self):
        grid = tuple(np.linspace(GAP - 0.1, GAP + 0.1, 2001)[np.linspace(GAP - 0.1, GAP + 0.1, 2001) > 0])
        # the low side is cut at zero drive; the golden rule tail there is negligible
        r = ex.run_sweep(spec(grid=grid, methods=("fgr",)))
        assert ex.sum_rule_integral(r, "fgr") == pytest.approx(analytic.lorentzian_area(V, ETA), rel=1e-2)

    def test_truncated(self):
        r = ex.run_sweep(spec(grid=tuple(ex.drive_grid(num=21)), methods=("fixed_lorentzian",),
                              decoherence_time=10.0))
        with pytest.raises(ex.TruncatedIntegralError, match="truncated integral"):
            ex.sum_rule_integral(r, "fixed_lorentzian")

    def test_needs_drive_sweep(self):
        r = ex.run_sweep(ex.SweepSpec("decoherence_time", (10.0, 100.0), ex.reference_tls(),
                                      PropagationConfig(), ("fgr",)))
        with pytest.raises(ValueError):
            ex.sum_rule_integral(r, "fgr")

    def test_lorentzian_grid_integrates(self):
        w = ETA * analytic.HBAR
        x = ex.lorentzian_grid(GAP, w, 1e-4, GAP + 0.1, 121)
        y = analytic.fgr_limit(V, GAP, x, ETA)
        assert np.trapezoid(y, x) == pytest.approx(analytic.lorentzian_area(V, ETA), rel=2e-2)
        assert np.all(np.diff(x) > 0)


class TestPeakAnalysis:
    def test_symmetric(self):
        r = ex.run_sweep(spec(grid=tuple(ex.drive_grid()), methods=("fixed_lorentzian",),
                              decoherence_time=1000.0))
        p = ex.peak_analysis(r, "fixed_lorentzian")
        assert abs(p.asymmetry) < 1e-3
        assert p.position == pytest.approx(GAP, abs=1e-9)
        assert p.fwhm == pytest.approx(2 * (ETA + 1e-3) * analytic.HBAR, rel=2e-2)

    @pytest.mark.parametrize("tau, grid", [
        (10.0, np.linspace(0.02, 0.4, 3801)),
        (math.inf, ex.drive_grid(num=401)),
    ])
    def test_adiabatic_shift(self, tau, grid):
        r = ex.run_sweep(spec(grid=tuple(grid), methods=("adiabatic_analytic",),
                              decoherence_time=tau))
        p = ex.peak_analysis(r, "adiabatic_analytic")
        assert p.position > GAP
        assert p.asymmetry > 0
        assert p.position == pytest.approx(analytic.adiabatic_peak_drive(GAP, ETA, tau), abs=2e-6)

    def test_asymmetry_without_bracketed_peak(self):
        r = ex.run_sweep(spec(grid=tuple(ex.drive_grid()), methods=("adiabatic_analytic",),
                              decoherence_time=10.0))
        assert int(np.argmax(r.column("adiabatic_analytic"))) == len(r.rows) - 1
        assert ex.asymmetry(r, "adiabatic_analytic") > 0

    def test_not_bracketed(self):
        r = ex.run_sweep(spec(grid=tuple(np.linspace(0.031, 0.04, 10)), methods=("fgr",)))
        with pytest.raises(ex.PeakNotBracketedError, match="peak not bracketed"):
            ex.peak_analysis(r, "fgr")

    def test_sharpness(self):
        assert ex.sharpness(np.array([1.0, 1.0, 4.0, 1.0])) == 4.0


class TestScenarios:
    def test_ws2_presets(self):
        gaps = {p: ex.ws2_system(p).gap for p in ex.WS2_GAPS}
        assert gaps == {"tensile": 0.056, "stress_free": 0.067, "compressed": 0.12}
        s = ex.ws2_system("compressed")
        assert sorted((x.amplitude, x.quantum) for x in s.stimuli) == [(0.007, 0.046), (0.016, 0.020)]
        with pytest.raises(ValueError):
            ex.ws2_system("relaxed")

    def test_ws2_scenario_columns(self):
        r = ex.ws2_scenario("compressed", (10.0, 100.0))
        assert r.columns == ("adiabatic_numeric", "adiabatic_numeric_3level")
        a, b = r.column("adiabatic_numeric"), r.column("adiabatic_numeric_3level")
        assert np.all((a > 0) & (a < 1))
        # the doublet model reduces exactly in the adiabatic basis
        np.testing.assert_allclose(a, b, rtol=1e-2)

    def test_fig4_small_grid(self):
        r = ex.fig4_decomposition((3.0, 300.0))
        num, ana = r.column("adiabatic_numeric"), r.column("multi_analytic")
        np.testing.assert_allclose(num, ana, rtol=2e-2)
        for row in r.rows:
            b = row.breakdown
            assert b.total == pytest.approx(sum(b.per_stimulus) + b.interference, abs=1e-12)

    def test_figure_columns(self):
        r = ex.figure("1a", points=3)
        assert "fixed_numeric_tau10" in r.columns and "fgr_tauinf" in r.columns
        assert len(r.rows) == 3
        with pytest.raises(ValueError):
            ex.figure("5")

    def test_default_tau_grid(self):
        g = ex.default_tau_grid()
        assert len(g) == 25 and g[0] == 1.0 and g[-1] == pytest.approx(1e4)
