"""Continuous-to-discrete conversion and discrete controller machinery.

Transfer functions are stored with the convention

    H(z) = (b0 z^n + b1 z^(n-1) + ... + bm z^(n-m)) / (z^n + a1 z^(n-1) + ... + an)

so the difference equation reads

    u_k = -a1 u_(k-1) - ... - an u_(k-n) + b0 e_k + b1 e_(k-1) + ... + bm e_(k-m)

Denominators are normalized to be monic so pole extraction is canonical.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from . import _kernels
from .errors import ConvergenceError
from .plant import LinearizedPlant

_DK_TOL = 1e-12
_DK_MAX_ITER = 1000


@dataclass(frozen=True)
class ContinuousTf:
    """Rational transfer function in s, coefficients highest degree first."""

    num: tuple
    den: tuple

    def __post_init__(self):
        if len(self.den) == 0 or self.den[0] == 0:
            raise ValueError("denominator must be non-empty with nonzero leading coefficient")
        if len(self.num) > len(self.den):
            raise ValueError("transfer function must be proper (deg num <= deg den)")
        object.__setattr__(self, "num", tuple(float(c) for c in self.num))
        object.__setattr__(self, "den", tuple(float(c) for c in self.den))


@dataclass(frozen=True)
class DiscreteTf:
    """Discrete transfer function: feedforward b0..bm, feedback a1..an, period T."""

    b: tuple
    a: tuple
    T: float

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError(f"sampling period must be positive, got {self.T}")
        if len(self.b) == 0:
            raise ValueError("at least one feedforward coefficient required")
        if len(self.b) - 1 > len(self.a):
            raise ValueError("non-causal transfer function: m > n")
        object.__setattr__(self, "b", tuple(float(c) for c in self.b))
        object.__setattr__(self, "a", tuple(float(c) for c in self.a))

    @property
    def order(self) -> int:
        return len(self.a)

    def den_poly(self) -> np.ndarray:
        """Monic denominator coefficients, highest degree first."""
        return np.concatenate(([1.0], self.a))

    def num_poly(self) -> np.ndarray:
        """Numerator aligned to z^n, highest degree first."""
        n, m = len(self.a), len(self.b) - 1
        return np.concatenate((self.b, np.zeros(n - m)))

    def poles(self) -> np.ndarray:
        if self.order == 0:
            return np.array([], dtype=complex)
        return poly_roots(self.den_poly())

    def zeros(self) -> np.ndarray:
        b = np.trim_zeros(np.asarray(self.b), "f")
        if len(b) <= 1:
            return np.array([], dtype=complex)
        return poly_roots(b)

    def eval(self, z: complex) -> complex:
        """Direct evaluation of H(z)."""
        n = len(self.a)
        num = sum(bj * z ** (n - j) for j, bj in enumerate(self.b))
        den = z ** n + sum(ai * z ** (n - 1 - i) for i, ai in enumerate(self.a))
        return num / den


@dataclass(frozen=True)
class DiscreteStateSpace:
    """Discrete affine system x+ = Ad x + Bd u + Ed, y = Cd x + Dd u."""

    Ad: np.ndarray
    Bd: np.ndarray
    Cd: np.ndarray
    Dd: float
    Ed: np.ndarray
    T: float

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError(f"sampling period must be positive, got {self.T}")
        n = self.Ad.shape[0]
        if self.Ad.shape != (n, n) or len(self.Bd) != n or len(self.Cd) != n or len(self.Ed) != n:
            raise ValueError("inconsistent state-space dimensions")

    @property
    def order(self) -> int:
        return self.Ad.shape[0]


@dataclass(frozen=True)
class PidGains:
    Kp: float
    Ki: float
    Kd: float

    def __post_init__(self):
        for g in (self.Kp, self.Ki, self.Kd):
            if not np.isfinite(g):
                raise ValueError(f"PID gains must be finite, got {self!r}")


@dataclass(frozen=True)
class ControllerState:
    """Velocity-form PID memory: previous output and two previous errors."""

    u_prev: float = 0.0
    e_prev: float = 0.0
    e_prev2: float = 0.0


def first_order_euler(K: float, a: float, b: float, dt: float) -> DiscreteTf:
    """Discretize K(s+a)/(s+b) by the forward-difference derivative rule.

    Coefficients: b0 = K, b1 = K(a dt - 1), a1 = (b dt - 1).
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    return DiscreteTf(b=(K, K * (a * dt - 1.0)), a=((b * dt - 1.0),), T=dt)


def _poly_substitute_euler(coeffs, T: float) -> np.ndarray:
    """Expand p((z-1)/T) * T^deg as a polynomial in z (highest degree first)."""
    deg = len(coeffs) - 1
    out = np.zeros(deg + 1)
    base = np.array([1.0])          # ((z-1))^k expanded
    for k, c in enumerate(reversed(coeffs)):   # c is coefficient of s^k
        term = c * base * T ** (deg - k)
        out[deg - k:] += term
        base = np.convolve(base, [1.0, -1.0])
    return out


def euler_substitute(tf: ContinuousTf, T: float) -> DiscreteTf:
    """Map a continuous transfer function to discrete time via s <- (z-1)/T."""
    if T <= 0:
        raise ValueError(f"period must be positive, got {T}")
    deg = len(tf.den) - 1
    num_padded = (0.0,) * (deg + 1 - len(tf.num)) + tf.num
    num_z = _poly_substitute_euler(num_padded, T)
    den_z = _poly_substitute_euler(tf.den, T)
    lead = den_z[0]
    if lead == 0 or not np.isfinite(lead):
        raise ValueError("degenerate leading coefficient after substitution")
    num_z = num_z / lead
    den_z = den_z / lead
    if deg == 0:
        return DiscreteTf(b=tuple(num_z), a=(), T=T)
    return DiscreteTf(b=tuple(num_z), a=tuple(den_z[1:]), T=T)


def zoh_matrices(A: np.ndarray, T: float) -> tuple[np.ndarray, np.ndarray]:
    """(exp(A T), integral of exp(A tau) over [0, T]).

    Computed from the augmented block exponential exp([[A, I], [0, 0]] T),
    whose top-left block is Ad and top-right block the hold integral.
    """
    if T <= 0:
        raise ValueError(f"period must be positive, got {T}")
    n = A.shape[0]
    M = np.zeros((2 * n, 2 * n))
    M[:n, :n] = A
    M[:n, n:] = np.eye(n)
    Phi = expm(M * T)
    Ad = Phi[:n, :n]
    S = Phi[:n, n:]
    if not np.all(np.isfinite(Ad)):
        spectral = float(np.max(np.abs(np.linalg.eigvals(A))))
        raise ConvergenceError(
            f"matrix exponential overflow at T={T} (spectral radius ~{spectral:.3g})")
    return Ad, S


def zoh_discretize(plant: LinearizedPlant, T: float) -> DiscreteStateSpace:
    """Exact-hold discretization of an affine continuous plant.

    The hold integral maps both the input matrix and the affine drive.
    """
    Ad, S = zoh_matrices(plant.A, T)
    return DiscreteStateSpace(Ad=Ad, Bd=S @ plant.B, Cd=plant.C.copy(),
                              Dd=plant.D, Ed=S @ plant.E, T=T)


def euler_discretize(plant: LinearizedPlant, T: float) -> DiscreteStateSpace:
    """Forward-difference discretization: Ad = I + T A, Bd = T B, Ed = T E."""
    if T <= 0:
        raise ValueError(f"period must be positive, got {T}")
    n = plant.A.shape[0]
    return DiscreteStateSpace(Ad=np.eye(n) + T * plant.A, Bd=T * plant.B,
                              Cd=plant.C.copy(), Dd=plant.D, Ed=T * plant.E, T=T)


def pid_tf(gains: PidGains, T: float) -> DiscreteTf:
    """Discrete PID Kp + Ki T/(z-1) + Kd (z-1)/(T z) over z(z-1).

    This is exactly the transfer function realized by the velocity-form
    update in :func:`pid_step`: the integral accumulates the previous
    error (forward rectangle) and the derivative difference is delayed by
    one sample to stay causal.  Difference equation:
    u_k = u_(k-1) + b0 e_k + b1 e_(k-1) + b2 e_(k-2).
    """
    if T <= 0:
        raise ValueError(f"period must be positive, got {T}")
    b0 = gains.Kp + gains.Kd / T
    b1 = gains.Ki * T - gains.Kp - 2.0 * gains.Kd / T
    b2 = gains.Kd / T
    return DiscreteTf(b=(b0, b1, b2), a=(-1.0, 0.0), T=T)


def pid_step(gains: PidGains, T: float, st: ControllerState,
             e_k: float) -> tuple[float, ControllerState]:
    """Velocity-form PID update; returns the command and the shifted state."""
    if T <= 0:
        raise ValueError(f"period must be positive, got {T}")
    u_k = st.u_prev \
        + gains.Kp * (e_k - st.e_prev) \
        + gains.Ki * T * st.e_prev \
        + (gains.Kd / T) * (e_k - 2.0 * st.e_prev + st.e_prev2)
    return u_k, ControllerState(u_prev=u_k, e_prev=e_k, e_prev2=st.e_prev)


def difference_step(tf: DiscreteTf, u_hist, e_hist) -> float:
    """One difference-equation update.

    ``u_hist`` holds past outputs, most recent first; ``e_hist`` holds the
    current error followed by past errors, most recent first.
    """
    if len(u_hist) < len(tf.a):
        raise ValueError(f"need {len(tf.a)} past outputs, got {len(u_hist)}")
    if len(e_hist) < len(tf.b):
        raise ValueError(f"need {len(tf.b)} error samples, got {len(e_hist)}")
    u_k = 0.0
    for i, ai in enumerate(tf.a):
        u_k -= ai * u_hist[i]
    for j, bj in enumerate(tf.b):
        u_k += bj * e_hist[j]
    return u_k


def poly_roots(coeffs, tol: float = _DK_TOL) -> np.ndarray:
    """All complex roots of a polynomial (highest degree first), with multiplicity.

    Simultaneous Weierstrass (Durand-Kerner) iteration.  Starting points sit on
    a circle of radius 1 + max|c_i / c_0|, rotated by 0.4 rad to break symmetry.
    """
    c = np.asarray(coeffs, dtype=complex)
    c = np.trim_zeros(c, "f")
    if len(c) < 2:
        raise ValueError("polynomial degree must be at least 1")
    c = c / c[0]
    deg = len(c) - 1

    # Exact-zero constant coefficients factor out as roots at the origin;
    # deflating them keeps clustered-root convergence clean.
    n_zero = 0
    while len(c) > 1 and c[-1] == 0:
        c = c[:-1]
        n_zero += 1
    zeros_at_origin = np.zeros(n_zero, dtype=complex)
    if len(c) < 2:
        return zeros_at_origin

    d = len(c) - 1
    radius = 1.0 + float(np.max(np.abs(c[1:])))
    k = np.arange(d)
    roots = radius * np.exp(1j * (2.0 * np.pi * k / d + 0.4))

    scale = float(np.max(np.abs(c)))
    delta_max = _kernels.durand_kerner(np.ascontiguousarray(c), roots, tol, _DK_MAX_ITER)
    if delta_max >= tol:
        residual = float(np.max(np.abs(np.polyval(c, roots))))
        if residual > tol * scale * max(1.0, radius) ** d:
            raise ConvergenceError(
                f"root iteration did not converge (residual {residual:.3e})",
                best=roots, residual=residual)

    return np.concatenate((roots, zeros_at_origin)) if n_zero else roots
