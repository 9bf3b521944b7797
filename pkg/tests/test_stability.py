"""Stability-analysis tests: classification, charpoly, closed loop, surfaces."""

import numpy as np
import pytest

from mmctrl import load_config
from mmctrl.discretization import ContinuousTf, DiscreteStateSpace, DiscreteTf, PidGains
from mmctrl.plant import DEFAULT_PARAMS, DEFAULT_SURFACES, linearize
from mmctrl.stability import (
    KMH_TO_MS,
    KNOWN_DISCREPANCY_NOTE,
    bode_data,
    charpoly,
    classify,
    closed_loop,
    discretize_tf,
    impulse_response,
    max_pole_magnitude,
    max_stable_period,
    stability_surface,
    state_space_to_tf,
    tf_to_state_space,
)

DRY = DEFAULT_SURFACES["dry_asphalt"]


class TestClassify:
    def test_asymptotic(self):
        v = classify([0.5, -0.3 + 0.2j])
        assert v.klass == "asymptotic"

    def test_unstable(self):
        assert classify([0.5, 1.2]).klass == "unstable"

    def test_marginal_simple_unit_pole(self):
        assert classify([1.0, 0.3]).klass == "marginal"

    def test_repeated_unit_pole_is_unstable(self):
        assert classify([1.0, 1.0]).klass == "unstable"

    def test_conjugate_unit_pair_is_marginal(self):
        # distinct points on the circle are simple poles
        z = np.exp(1j * 0.7)
        assert classify([z, np.conj(z)]).klass == "marginal"

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            classify([])


class TestCharpoly:
    def test_matches_numpy_poly(self):
        rng = np.random.default_rng(23)
        for _ in range(50):
            n = int(rng.integers(1, 7))
            A = rng.normal(size=(n, n))
            got = charpoly(A)
            want = np.poly(A)
            assert np.allclose(got, want, rtol=1e-9, atol=1e-9)


class TestStateSpaceRoundTrip:
    def test_tf_to_ss_preserves_response(self):
        tf = ContinuousTf(num=(1.0, 0.5), den=(2.0, -0.5, 1.0))
        A, B, C, D = tf_to_state_space(tf)
        for s in (0.3 + 1j, -2.0, 5.0j):
            H_ss = C @ np.linalg.solve(s * np.eye(A.shape[0]) - A, B) + D
            H_tf = np.polyval(tf.num, s) / np.polyval(tf.den, s)
            assert H_ss == pytest.approx(H_tf, rel=1e-12)

    def test_discrete_ss_to_tf_preserves_response(self):
        rng = np.random.default_rng(31)
        A = rng.normal(size=(3, 3)) * 0.4
        B = rng.normal(size=3)
        C = rng.normal(size=3)
        sys = DiscreteStateSpace(Ad=A, Bd=B, Cd=C, Dd=0.7, Ed=np.zeros(3), T=0.1)
        tf = state_space_to_tf(sys)
        for z in (1.5, 0.3 + 0.9j, -2.0):
            H_ss = C @ np.linalg.solve(z * np.eye(3) - A, B) + 0.7
            assert tf.eval(z) == pytest.approx(H_ss, rel=1e-9)


class TestWorkedOpenLoopExamples:
    """Open-loop discretization verdicts for the two second-order examples."""

    CASE1 = ContinuousTf(num=(1.0, 0.5), den=(2.0, -0.5, 1.0))
    CASE2 = ContinuousTf(num=(1.0, 0.5), den=(5.0, 1.0, 10.0))

    def test_case1_euler_T2_pole_magnitude(self):
        # oracle: quadratic formula on 2z^2 - 5z + 7 -> |p| = sqrt(56)/4
        tf = discretize_tf(self.CASE1, 2.0, backend="euler")
        mags = np.abs(tf.poles())
        assert np.max(mags) == pytest.approx(np.sqrt(56.0) / 4.0, abs=1e-9)
        assert classify(tf.poles()).klass == "unstable"

    def test_case1_euler_T1_unstable(self):
        # oracle: poles of 2z^2 - 4.5z + 3.5 have |p|^2 = 1.75
        tf = discretize_tf(self.CASE1, 1.0, backend="euler")
        assert np.max(np.abs(tf.poles())) == pytest.approx(np.sqrt(1.75), abs=1e-9)
        assert classify(tf.poles()).klass == "unstable"

    def test_case1_zoh_T1_unstable(self):
        # continuous poles have positive real part, so exact hold maps them
        # outside the unit circle at any period
        tf = discretize_tf(self.CASE1, 1.0, backend="zoh")
        assert classify(tf.poles()).klass == "unstable"

    def test_case1_t1_discrepancy_documented(self):
        assert "T=1s" in KNOWN_DISCREPANCY_NOTE
        assert "not reproducible" in KNOWN_DISCREPANCY_NOTE

    @pytest.mark.parametrize("T", [2.0, 1.0])
    def test_case2_zoh_stable(self, T):
        # continuous poles at (-1 +- j sqrt(199))/10: stable half plane
        tf = discretize_tf(self.CASE2, T, backend="zoh")
        assert classify(tf.poles()).klass == "asymptotic"
        # exact-hold pole magnitude equals exp(Re(p) T)
        assert np.max(np.abs(tf.poles())) == pytest.approx(np.exp(-0.1 * T), rel=1e-9)


class TestImpulseResponse:
    def test_first_order_geometric(self):
        tf = DiscreteTf(b=(1.0,), a=(-0.5,), T=0.1)
        h = impulse_response(tf, 10)
        assert np.allclose(h, 0.5 ** np.arange(10))


class TestClosedLoop:
    def setup_method(self):
        self.cfg = load_config()

    def test_pole_magnitude_matches_lapack(self):
        # oracle: numpy eigvals on the same matrix
        lp = linearize(80.0 * KMH_TO_MS, 0.1, self.cfg.vehicle, DRY)
        sys = closed_loop(lp, self.cfg.gains, 1e-4)
        got = max_pole_magnitude(sys)
        want = float(np.max(np.abs(np.linalg.eigvals(sys.Ad))))
        assert got == pytest.approx(want, abs=1e-9)

    def test_quasi_integrator_pole_present(self):
        # the loop has a structural pole at z ~ 1 from the PID integrator
        lp = linearize(60.0 * KMH_TO_MS, 0.1, self.cfg.vehicle, DRY)
        sys = closed_loop(lp, self.cfg.gains, 1e-4)
        poles = np.linalg.eigvals(sys.Ad)
        assert np.min(np.abs(poles - 1.0)) < 1e-6

    def test_unknown_backend_rejected(self):
        lp = linearize(60.0 * KMH_TO_MS, 0.1, self.cfg.vehicle, DRY)
        with pytest.raises(ValueError):
            closed_loop(lp, self.cfg.gains, 1e-4, backend="tustin")

    def test_coarse_period_destabilizes(self):
        # the slip-contrast premise: at T = 0.01 s and low speed the loop
        # with the main gains has a pole well outside the unit circle
        lp = linearize(30.0 * KMH_TO_MS, 0.1, self.cfg.vehicle, DRY)
        sys = closed_loop(lp, self.cfg.gains, 0.01)
        assert max_pole_magnitude(sys) > 1.0 + 1e-6


class TestSurfaceAndPeriodSearch:
    def setup_method(self):
        self.cfg = load_config()

    def test_grid_shape_and_determinism(self):
        surf1 = stability_surface((20.0, 100.0, 40.0), (0.0, 1.0, 0.5), 1e-4,
                                  self.cfg.vehicle, DRY, self.cfg.gains)
        surf2 = stability_surface((20.0, 100.0, 40.0), (0.0, 1.0, 0.5), 1e-4,
                                  self.cfg.vehicle, DRY, self.cfg.gains)
        assert surf1.values.shape == (3, 3)
        assert np.array_equal(surf1.values, surf2.values)

    def test_zero_velocity_cell_is_nan(self):
        surf = stability_surface((0.0, 40.0, 40.0), (0.0, 0.2, 0.2), 1e-4,
                                 self.cfg.vehicle, DRY, self.cfg.gains)
        assert np.all(np.isnan(surf.values[0, :]))
        assert np.all(np.isfinite(surf.values[1, :]))
        assert len(surf.diagnostics) == 2

    def test_max_stable_period_brackets_transition(self):
        res = max_stable_period(60.0, 0.1, (1e-5, 0.05), 1e-6,
                                self.cfg.vehicle, DRY, self.cfg.gains)
        assert not res.unbounded_in_range
        assert 1e-5 < res.period < 0.05
        # predicate flips across the reported period
        lp = linearize(60.0 * KMH_TO_MS, 0.1, self.cfg.vehicle, DRY)
        below = max_pole_magnitude(closed_loop(lp, self.cfg.gains, res.period * 0.98))
        above = max_pole_magnitude(closed_loop(lp, self.cfg.gains, res.period * 1.05))
        assert below <= 1.0 + 1e-9
        assert above > 1.0 + 1e-9

    def test_unstable_at_lower_bound_rejected(self):
        with pytest.raises(ValueError):
            max_stable_period(30.0, 0.1, (0.01, 0.05), 1e-6,
                              self.cfg.vehicle, DRY, self.cfg.gains)


class TestBode:
    def test_static_gain_is_flat(self):
        tf = DiscreteTf(b=(2.0,), a=(), T=0.01)
        data = bode_data(tf, 50)
        assert np.allclose(data.magnitude_db, 20.0 * np.log10(2.0))

    def test_respects_nyquist_bound(self):
        tf = DiscreteTf(b=(1.0,), a=(-0.5,), T=0.01)
        data = bode_data(tf, 100)
        assert np.all(data.omega < np.pi / tf.T)
        assert np.all(np.diff(data.omega) > 0)

    def test_first_order_matches_closed_form(self):
        # oracle: H(e^{jwT}) for H(z) = 1/(z - 0.5)
        tf = DiscreteTf(b=(1.0,), a=(-0.5,), T=0.1)
        data = bode_data(tf, 20)
        for w, mdb in zip(data.omega, data.magnitude_db):
            H = 1.0 / (np.exp(1j * w * tf.T) - 0.5)
            assert mdb == pytest.approx(20.0 * np.log10(abs(H)), rel=1e-9)
