"""Discretization tests: Euler substitution, ZOH, PID forms, root finding."""

import numpy as np
import pytest

from mmctrl.discretization import (
    ContinuousTf,
    ControllerState,
    DiscreteTf,
    PidGains,
    difference_step,
    euler_discretize,
    euler_substitute,
    first_order_euler,
    pid_step,
    pid_tf,
    poly_roots,
    zoh_discretize,
    zoh_matrices,
)
from mmctrl.plant import DEFAULT_PARAMS, DEFAULT_SURFACES, linearize


class TestFirstOrderEuler:
    def test_closed_form_coefficients(self):
        K, a, b, dt = 2.0, 3.0, 5.0, 0.1
        tf = first_order_euler(K, a, b, dt)
        assert tf.b == (K, K * (a * dt - 1.0))
        assert tf.a == (b * dt - 1.0,)

    def test_consistency_with_general_substitution(self):
        K, a, b, dt = 1.7, 0.4, 2.2, 0.05
        general = euler_substitute(ContinuousTf(num=(K, K * a), den=(1.0, b)), dt)
        direct = first_order_euler(K, a, b, dt)
        assert np.allclose(general.b, direct.b)
        assert np.allclose(general.a, direct.a)

    def test_rejects_bad_dt(self):
        with pytest.raises(ValueError):
            first_order_euler(1.0, 1.0, 1.0, 0.0)


class TestEulerSubstitute:
    def test_worked_second_order_example(self):
        # oracle: hand expansion of (s+0.5)/(2s^2-0.5s+1) with s=(z-1)/T, T=2:
        # denominator proportional to 2z^2 - 5z + 7
        tf = euler_substitute(ContinuousTf(num=(1.0, 0.5), den=(2.0, -0.5, 1.0)), 2.0)
        den = tf.den_poly() * 2.0   # undo monic normalization
        assert np.allclose(den, [2.0, -5.0, 7.0])

    def test_matches_numpy_polynomial_composition(self):
        # oracle: compose with numpy polynomial arithmetic
        rng = np.random.default_rng(5)
        for _ in range(50):
            den = rng.uniform(-2.0, 2.0, 4)
            den[0] = rng.uniform(0.5, 2.0)
            num = rng.uniform(-2.0, 2.0, 3)
            T = rng.uniform(0.01, 2.0)
            tf = euler_substitute(ContinuousTf(num=tuple(num), den=tuple(den)), T)
            zs = np.exp(1j * rng.uniform(0.0, np.pi, 5))
            for z in zs:
                s = (z - 1.0) / T
                expected = np.polyval(num, s) / np.polyval(den, s)
                assert tf.eval(z) == pytest.approx(expected, rel=1e-9)

    def test_preserves_poles(self):
        # continuous pole p maps to discrete pole 1 + p T
        tf = euler_substitute(ContinuousTf(num=(1.0,), den=(1.0, 3.0, 2.0)), 0.1)
        got = sorted(np.real(tf.poles()))
        assert got == pytest.approx([1.0 - 2.0 * 0.1, 1.0 - 1.0 * 0.1])


class TestZoh:
    def test_diagonal_matches_scalar_exponentials(self):
        lams = np.array([-3.0, -0.5, 1.2])
        A = np.diag(lams)
        T = 0.37
        Ad, S = zoh_matrices(A, T)
        assert np.allclose(np.diag(Ad), np.exp(lams * T), rtol=1e-12)
        assert np.allclose(np.diag(S), (np.exp(lams * T) - 1.0) / lams, rtol=1e-12)

    def test_nilpotent_case(self):
        # A = [[0,1],[0,0]] has exact exponential [[1,T],[0,1]]
        A = np.array([[0.0, 1.0], [0.0, 0.0]])
        Ad, S = zoh_matrices(A, 0.25)
        assert np.allclose(Ad, [[1.0, 0.25], [0.0, 1.0]])
        assert np.allclose(S, [[0.25, 0.25 ** 2 / 2.0], [0.0, 0.25]])

    def test_plant_discretization_consistency(self):
        lp = linearize(30.0, 0.1, DEFAULT_PARAMS, DEFAULT_SURFACES["dry_asphalt"])
        sysd = zoh_discretize(lp, 1e-4)
        # small-T limit agrees with the forward-difference map to first order
        syse = euler_discretize(lp, 1e-4)
        assert np.allclose(sysd.Ad, syse.Ad, atol=1e-4)
        assert np.allclose(sysd.Bd, syse.Bd, rtol=1e-3)
        assert np.allclose(sysd.Ed, syse.Ed, rtol=1e-2, atol=3e-6)


class TestPid:
    def test_tf_is_sum_of_three_terms(self):
        # oracle: evaluate Kp + Ki T/(z-1) + Kd (z-1)/(T z) directly
        g = PidGains(Kp=3.0, Ki=7.0, Kd=0.2)
        T = 0.05
        tf = pid_tf(g, T)
        for z in (0.3 + 0.4j, -0.8, 2.0, 1.5j):
            expected = g.Kp + g.Ki * T / (z - 1.0) + g.Kd * (z - 1.0) / (T * z)
            assert tf.eval(z) == pytest.approx(expected, rel=1e-12)

    def test_velocity_form_matches_tf_long_division(self):
        # oracle: impulse response by polynomial long division of b(z)/a(z)
        g = PidGains(Kp=2.5, Ki=4.0, Kd=0.1)
        T = 0.02
        tf = pid_tf(g, T)
        n = 100
        # long division of num/den in powers of z^-1
        num = list(tf.num_poly())
        den = list(tf.den_poly())
        h = []
        rem = num + [0.0] * n
        for k in range(n):
            q = rem[k] / den[0]
            h.append(q)
            for j in range(len(den)):
                rem[k + j] -= q * den[j]
        st = ControllerState()
        got = []
        for k in range(n):
            e_k = 1.0 if k == 0 else 0.0
            u, st = pid_step(g, T, st, e_k)
            got.append(u)
        assert np.allclose(got, h, atol=1e-10)

    def test_difference_step_equals_pid_step(self):
        g = PidGains(Kp=1.0, Ki=2.0, Kd=0.05)
        T = 0.01
        tf = pid_tf(g, T)
        rng = np.random.default_rng(9)
        e = rng.normal(size=50)
        st = ControllerState()
        u_hist = [0.0, 0.0]
        e_hist = [0.0, 0.0, 0.0]
        for k in range(50):
            u_vel, st = pid_step(g, T, st, e[k])
            e_hist = [e[k]] + e_hist[:2]
            u_tf = difference_step(tf, u_hist, e_hist)
            u_hist = [u_tf, u_hist[0]]
            assert u_vel == pytest.approx(u_tf, rel=1e-12, abs=1e-12)

    def test_difference_step_needs_history(self):
        tf = pid_tf(PidGains(1.0, 1.0, 0.0), 0.1)
        with pytest.raises(ValueError):
            difference_step(tf, [0.0], [1.0, 0.0, 0.0])


class TestDiscreteTf:
    def test_causality_enforced(self):
        with pytest.raises(ValueError):
            DiscreteTf(b=(1.0, 2.0, 3.0), a=(0.5,), T=0.1)

    def test_poles_and_zeros(self):
        # H(z) = (z - 0.5)/(z^2 - 0.25): zeros {0.5}, poles {0.5, -0.5}
        tf = DiscreteTf(b=(1.0, -0.5), a=(0.0, -0.25), T=0.1)
        assert sorted(np.real(tf.poles())) == pytest.approx([-0.5, 0.5])
        assert np.real(tf.zeros()) == pytest.approx([0.5])


class TestPolyRoots:
    def test_reconstruction_random(self):
        # oracle: expand known roots and recover them
        rng = np.random.default_rng(17)
        for _ in range(60):
            deg = rng.integers(1, 7)
            roots = rng.uniform(-2.0, 2.0, deg) + 1j * rng.uniform(-2.0, 2.0, deg)
            coeffs = np.poly(roots)
            got = np.sort_complex(poly_roots(coeffs))
            want = np.sort_complex(roots)
            assert np.allclose(got, want, atol=1e-8)

    def test_zeros_at_origin_deflated(self):
        # z^3 - z^2 = z^2 (z - 1)
        got = sorted(poly_roots([1.0, -1.0, 0.0, 0.0]), key=abs)
        assert np.allclose(got, [0.0, 0.0, 1.0], atol=1e-12)

    def test_clustered_pair(self):
        # (z - 0.999)^2 — close roots still reconstruct the polynomial
        coeffs = np.poly([0.999, 0.999])
        got = poly_roots(coeffs)
        assert np.allclose(np.sort(np.real(got)), [0.999, 0.999], atol=1e-5)

    def test_degree_zero_rejected(self):
        with pytest.raises(ValueError):
            poly_roots([2.0])
