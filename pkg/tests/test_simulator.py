"""Scenario-engine tests: braking, cruising, metrics, comparison, ECU sharing."""

from dataclasses import replace

import numpy as np
import pytest

from mmctrl import load_config
from mmctrl.config import Numerics
from mmctrl.errors import ConfigError
from mmctrl.plant import RoadSurface
from mmctrl.simulator import (
    ControllerSpec,
    DriveProfile,
    Scenario,
    SimTrace,
    compare,
    run_acc_shared,
    run_braking,
    run_cruising,
    slip_metrics,
)
from mmctrl.supervisor import ModeId, SupervisorState, step


@pytest.fixture(scope="module")
def cfg():
    return load_config()


def _braking(v0=100.0, surface="dry_asphalt", controller=None):
    return Scenario(kind="braking", v0=v0, surface=surface,
                    controller=controller or ControllerSpec("multimode"))


class TestControllerSpec:
    def test_parse_fixed(self):
        spec = ControllerSpec.parse("fixed:2e-4")
        assert spec.kind == "fixed" and spec.T == 2e-4

    def test_parse_multimode(self):
        assert ControllerSpec.parse("multimode").kind == "multimode"

    @pytest.mark.parametrize("text", ["fixed:abc", "fixed:-1", "pid"])
    def test_parse_rejects(self, text):
        with pytest.raises(ConfigError):
            ControllerSpec.parse(text)


class TestDriveProfile:
    def test_timestamps_must_increase(self):
        with pytest.raises(ConfigError):
            DriveProfile(t=np.array([0.0, 0.0]), v_set=np.array([1.0, 1.0]),
                         bpp=np.zeros(2), surface=np.array(["dry_asphalt"] * 2))

    def test_values_in_domain(self):
        with pytest.raises(ConfigError):
            DriveProfile(t=np.array([0.0, 1.0]), v_set=np.array([1.0, 1.0]),
                         bpp=np.array([0.0, 1.5]),
                         surface=np.array(["dry_asphalt"] * 2))

    def test_csv_row_error_is_indexed(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("t,v_set,bpp,surface\n0,50,0,dry_asphalt\n1,x,0,dry_asphalt\n")
        with pytest.raises(ConfigError, match="row 2"):
            DriveProfile.from_csv(p)

    def test_csv_header_required(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("time,speed\n0,50\n")
        with pytest.raises(ConfigError, match="header"):
            DriveProfile.from_csv(p)


class TestRunBraking:
    def test_terminal_state(self, cfg):
        trace, dist, _ = run_braking(_braking(), cfg)
        assert trace.V_x[-1] <= cfg.numerics.rest_speed
        assert trace.lam[-1] == 1.0
        assert dist > 0

    def test_surface_ordering(self, cfg):
        dists = {}
        for s in ("dry_asphalt", "gravel", "loose_gravel", "wet"):
            dists[s] = run_braking(_braking(surface=s), cfg)[1]
        assert dists["dry_asphalt"] < dists["gravel"] \
            < dists["loose_gravel"] < dists["wet"]

    def test_determinism(self, cfg):
        t1 = run_braking(_braking(), cfg)[0]
        t2 = run_braking(_braking(), cfg)[0]
        assert np.array_equal(t1.V_x, t2.V_x)
        assert np.array_equal(t1.M_b, t2.M_b)

    def test_frictionless_surface_hits_time_cap(self, cfg):
        # alpha = 0 gives zero friction while slip is held at the breakpoint:
        # no deceleration, so the run terminates at the configured time cap
        cfg2 = replace(cfg,
                       surfaces={**cfg.surfaces,
                                 "ice": RoadSurface("ice", alpha=0.0, beta=-0.1)},
                       numerics=replace(cfg.numerics, t_max=5.0))
        sc = _braking(v0=100.0, surface="ice",
                      controller=ControllerSpec("fixed", 1e-4))
        trace, dist, _ = run_braking(sc, cfg2)
        assert trace.t[-1] >= 5.0 - 1e-3
        assert trace.V_x[-1] > 0.9 * 100.0 / 3.6      # essentially undecelerated

    def test_mode_trace_justified_by_supervisor_replay(self, cfg):
        # oracle: the reference supervisor stepped along the recorded
        # velocities reproduces the recorded mode sequence exactly
        trace, _, _ = run_braking(_braking(v0=200.0), cfg)
        names = trace.mode_names()
        s = SupervisorState(mode=cfg.start_mode)
        for i in range(len(trace.t) - 1):      # closing row repeats the mode
            s = step(s, trace.V_x[i] * 3.6, 1.0, cfg.guard_table, cfg.debounce)
            assert names[i] == s.mode.value

    def test_fixed_report_has_no_mode_dwell(self, cfg):
        _, _, report = run_braking(
            _braking(controller=ControllerSpec("fixed", 2e-4)), cfg)
        assert report.dwell == {"fixed": 1.0}
        assert report.savings == pytest.approx(0.5)    # vs the 1e-4 baseline

    def test_torque_within_actuator_bounds(self, cfg):
        trace, _, _ = run_braking(_braking(v0=200.0), cfg)
        assert np.all(trace.M_b >= 0.0)
        assert np.all(trace.M_b <= cfg.numerics.mb_max)

    def test_wrong_kind_rejected(self, cfg):
        sc = Scenario(kind="cruising", v0=50.0, surface="dry_asphalt",
                      controller=ControllerSpec("multimode"))
        with pytest.raises(ConfigError):
            run_braking(sc, cfg)


class TestRunCruising:
    def _profile(self, rows):
        t, v, b = zip(*rows)
        return DriveProfile(t=np.array(t, float), v_set=np.array(v, float),
                            bpp=np.array(b, float),
                            surface=np.array(["dry_asphalt"] * len(rows),
                                             dtype=object))

    def test_constant_slow_no_pedal_is_pure_n0(self, cfg):
        profile = self._profile([(0.0, 60.0, 0.0), (10.0, 60.0, 0.0)])
        _, report, _ = run_cruising(profile, cfg)
        assert report.dwell == {"N0": pytest.approx(1.0)}
        assert report.savings == pytest.approx(0.5)

    def test_pinned_fast_hard_pedal_is_pure_e(self, cfg):
        profile = self._profile([(0.0, 150.0, 0.8), (10.0, 150.0, 0.8)])
        _, report, _ = run_cruising(profile, cfg)
        assert report.dwell == {"E": pytest.approx(1.0)}
        assert report.savings == pytest.approx(0.0)

    def test_city_fixture_savings_in_band(self, cfg):
        from importlib import resources
        path = resources.files("mmctrl.data").joinpath("profiles").joinpath("city.csv")
        profile = DriveProfile.from_csv(str(path))
        _, report, transitions = run_cruising(profile, cfg)
        assert 0.30 <= report.savings <= 0.50
        assert len(transitions) >= 4          # the profile exercises switching

    def test_transition_log_is_ordered(self, cfg):
        profile = self._profile([(0.0, 60.0, 0.0), (40.0, 150.0, 0.0),
                                 (60.0, 150.0, 0.9), (80.0, 40.0, 0.0),
                                 (100.0, 40.0, 0.0)])
        _, _, transitions = run_cruising(profile, cfg)
        times = [t for t, _ in transitions]
        assert times == sorted(times)
        modes = [m for _, m in transitions]
        assert "E" in modes                   # hard pedal at speed reached E


class TestSlipMetrics:
    def _trace(self, lam):
        n = len(lam)
        return SimTrace(t=np.arange(n, dtype=float), V_x=np.full(n, 20.0),
                        omega=np.zeros(n), lam=np.asarray(lam, float),
                        M_b=np.zeros(n), mode=np.full(n, -1, dtype=np.int8),
                        period=np.full(n, 1e-4))

    def test_constant_at_setpoint(self):
        m = slip_metrics(self._trace([0.2] * 50), 0.2, 1.0)
        assert m["rmse"] == 0.0
        assert m["variance"] == pytest.approx(0.0, abs=1e-30)
        assert m["max_overshoot"] == 0.0

    def test_sinusoid_rmse_closed_form(self):
        # oracle: rms of a sinusoid over whole cycles is amplitude/sqrt(2)
        n = 1000
        lam = 0.2 + 0.1 * np.sin(2.0 * np.pi * np.arange(n) / 100.0)
        m = slip_metrics(self._trace(lam), 0.2, 1.0)
        assert m["rmse"] == pytest.approx(0.1 / np.sqrt(2.0), rel=1e-9)
        assert m["max_overshoot"] == pytest.approx(0.1, rel=1e-3)

    def test_floor_excludes_samples(self):
        tr = self._trace([0.2] * 10)
        m = slip_metrics(tr, 0.2, 30.0)       # floor above every sample
        assert np.isnan(m["rmse"])

    def test_empty_trace_rejected(self):
        empty = SimTrace(t=np.array([]), V_x=np.array([]), omega=np.array([]),
                         lam=np.array([]), M_b=np.array([]),
                         mode=np.array([], dtype=np.int8), period=np.array([]))
        with pytest.raises(ValueError):
            slip_metrics(empty, 0.2, 1.0)


class TestCompare:
    def test_identical_variants_zero_diff(self, cfg):
        sc = _braking(controller=ControllerSpec("fixed", 1e-4))
        out = compare(sc, [ControllerSpec("fixed", 1e-4),
                           ControllerSpec("fixed", 1e-4)], cfg)
        (pair,) = out["pairwise"].values()
        assert pair["distance_rel_diff"] == 0.0

    def test_needs_two_variants(self, cfg):
        with pytest.raises(ConfigError):
            compare(_braking(), [ControllerSpec("multimode")], cfg)

    def test_coarse_period_has_larger_variance(self, cfg):
        sc = _braking(controller=ControllerSpec("fixed", 2e-4))
        out = compare(sc, [ControllerSpec("fixed", 2e-4),
                           ControllerSpec("fixed", 1e-4)], cfg)
        v_coarse = out["variants"]["fixed:0.0002"]["slip"]["variance"]
        v_fine = out["variants"]["fixed:0.0001"]["slip"]["variance"]
        assert v_coarse >= v_fine

    def test_failed_variant_is_flagged(self, cfg):
        sc = Scenario(kind="braking", v0=100.0, surface="no_such_surface",
                      controller=ControllerSpec("multimode"))
        out = compare(sc, [ControllerSpec("multimode"),
                           ControllerSpec("fixed", 1e-4)], cfg)
        assert all(v["failed"] for v in out["variants"].values())
        assert out["pairwise"] == {}


class TestAccShared:
    def test_requires_feature_enabled(self, cfg):
        cfg2 = replace(cfg, acc_enabled=False)
        profile = DriveProfile(
            t=np.array([0.0, 10.0]), v_set=np.array([100.0, 100.0]),
            bpp=np.zeros(2), surface=np.array(["dry_asphalt"] * 2, dtype=object))
        with pytest.raises(ConfigError):
            run_acc_shared(profile, cfg2)

    def test_highway_fixture_policy_and_utilization(self, cfg):
        from importlib import resources
        path = resources.files("mmctrl.data").joinpath("profiles").joinpath("highway.csv")
        profile = DriveProfile.from_csv(str(path))
        result = run_acc_shared(profile, cfg)
        assert result["combined_peak_utilization"] <= 1.0
        assert result["combined_mean_utilization"] \
            < result["baseline_two_fixed_utilization"]
        policy = cfg.acc_policy
        for seg in result["segments"]:
            if seg["acc_mode"] == "active":
                assert seg["T_acc"] == policy.fast
            elif seg["acc_mode"] == "suspended":
                assert seg["T_acc"] == policy.slow
            else:
                assert seg["T_acc"] is None
        # hard-braking segments suspend the cruise controller
        assert any(s["acc_mode"] == "suspended" for s in result["segments"])
        assert any(s["acc_mode"] == "active" for s in result["segments"])
