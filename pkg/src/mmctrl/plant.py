"""Quarter-car braking plant.

Piecewise-linear tyre friction, the nonlinear slip dynamics, the
equilibrium braking torque, affine linearization about an operating
point, and a fixed-step RK4 integrator.

Two linearization backends are provided:

* ``as-printed`` -- the published affine matrices for this model family,
  whose lower-left entry drops the (1 - lambda)/m contribution.
* ``full-jacobian`` -- the exact Jacobian of the nonlinear vector field
  with the combined input u* = M_b * V_x held fixed (at zero).

Both share B = [0; R/(J_w * V'^2)], C = [0 1], D = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SingularLinearization, SimulationBlowup, VehicleAtRest

#: Slip value at which the friction law changes branch.
FRICTION_BREAKPOINT = 0.2

#: Below this speed (m/s) the vehicle counts as stopped and slip is pinned at 1.
REST_SPEED = 0.5


@dataclass(frozen=True)
class VehicleParams:
    """Physical description of the quarter vehicle."""

    m: float       # quarter-vehicle mass, kg
    R: float       # wheel radius, m
    J_w: float     # wheel inertia, kg m^2
    F_N: float     # vertical force, N

    def __post_init__(self):
        for name in ("m", "R", "J_w", "F_N"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"VehicleParams.{name} must be positive and finite, got {v}")


#: Typical quarter-car values; overridable through the config file.
DEFAULT_PARAMS = VehicleParams(m=342.0, R=0.33, J_w=1.13, F_N=3355.0)


@dataclass(frozen=True)
class RoadSurface:
    """Friction law parameters: slope below the breakpoint, offset above it."""

    name: str
    alpha: float
    beta: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 8.0:
            raise ValueError(f"surface alpha must be in [0, 8], got {self.alpha}")
        if not -0.1 <= self.beta <= 0.1:
            raise ValueError(f"surface beta must be in [-0.1, 0.1], got {self.beta}")


#: Default surface table, ordered so higher friction gives shorter stopping distance.
DEFAULT_SURFACES = {
    "dry_asphalt": RoadSurface("dry_asphalt", alpha=6.4),
    "gravel": RoadSurface("gravel", alpha=5.46),
    "loose_gravel": RoadSurface("loose_gravel", alpha=5.1),
    "wet": RoadSurface("wet", alpha=4.8),
}


@dataclass(frozen=True)
class VehicleState:
    """Instantaneous plant state: vehicle speed, wheel speed, and slip."""

    V_x: float     # vehicle speed, m/s
    omega: float   # wheel angular speed, rad/s
    lam: float     # wheel slip, dimensionless

    def __post_init__(self):
        if self.V_x < 0:
            raise ValueError(f"V_x must be >= 0, got {self.V_x}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"slip must be in [0, 1], got {self.lam}")

    @classmethod
    def from_wheel(cls, V_x: float, omega: float, R: float) -> "VehicleState":
        """Build a consistent state, deriving slip from the wheel speed."""
        if V_x <= 0:
            return cls(V_x=max(V_x, 0.0), omega=omega, lam=1.0)
        return cls(V_x=V_x, omega=omega, lam=slip(V_x, omega, R))

    def check_consistent(self, R: float, tol: float = 1e-9) -> bool:
        """True when the stored slip matches 1 - omega R / V_x."""
        if self.V_x <= 0:
            return self.lam == 1.0
        return abs(self.lam - slip(self.V_x, self.omega, R)) <= tol


@dataclass(frozen=True)
class LinearizedPlant:
    """Affine local model d/dt [V_x, lam] = A x + B u* + E, y = lam."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: float
    E: np.ndarray
    op_V: float
    op_lambda: float
    branch: str    # "low-slip" (lam <= 0.2) or "high-slip" (lam > 0.2)

    def __post_init__(self):
        if self.op_V <= 0:
            raise SingularLinearization(f"operating velocity must be positive, got {self.op_V}")
        expected = "low-slip" if self.op_lambda <= FRICTION_BREAKPOINT else "high-slip"
        if self.branch != expected:
            raise ValueError(f"branch {self.branch!r} inconsistent with slip {self.op_lambda}")


def friction_coefficient(lam: float, surface: RoadSurface) -> float:
    """Piecewise-linear road friction coefficient as a function of slip."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"slip must be in [0, 1], got {lam}")
    if lam <= FRICTION_BREAKPOINT:
        return surface.alpha * lam
    return -0.5 * lam + 0.75 + surface.beta


def slip(V_x: float, omega: float, R: float) -> float:
    """Wheel slip 1 - omega R / V_x, clamped to [0, 1]."""
    if V_x <= 0:
        raise VehicleAtRest(f"slip undefined at V_x={V_x}; treat as 1 at rest")
    return min(1.0, max(0.0, 1.0 - omega * R / V_x))


def derivatives(state: VehicleState, M_b: float, params: VehicleParams,
                surface: RoadSurface) -> tuple[float, float, float]:
    """Time derivatives (dV_x, domega, dlam) of the nonlinear model."""
    if state.V_x <= 0:
        raise VehicleAtRest("derivatives undefined at rest")
    mu = friction_coefficient(state.lam, surface)
    m, R, J, F_N = params.m, params.R, params.J_w, params.F_N
    dV = -F_N * mu / m
    domega = R * F_N * mu / J - M_b / J
    dlam = (-1.0 / state.V_x) * ((1.0 - state.lam) / m + R * R / J) * F_N * mu \
        + (R / (J * state.V_x)) * M_b
    return dV, domega, dlam


def equilibrium_torque(state: VehicleState, dV_x: float, params: VehicleParams) -> float:
    """Braking torque that holds slip constant at the given deceleration."""
    return ((state.lam - 1.0) * params.J_w / params.R - params.m * params.R) * dV_x


def _vector_field(V: float, lam: float, u_star: float, params: VehicleParams,
                  surface: RoadSurface) -> tuple[float, float]:
    """(dV_x, dlam) with the combined input u* = M_b * V_x held fixed."""
    mu = friction_coefficient(min(1.0, max(0.0, lam)), surface)
    m, R, J, F_N = params.m, params.R, params.J_w, params.F_N
    dV = -F_N * mu / m
    dlam = (-1.0 / V) * ((1.0 - lam) / m + R * R / J) * F_N * mu \
        + (R / (J * V * V)) * u_star
    return dV, dlam


def linearize(op_V: float, op_lambda: float, params: VehicleParams,
              surface: RoadSurface, backend: str = "as-printed") -> LinearizedPlant:
    """Affine linearization of the slip dynamics at (op_V, op_lambda).

    ``op_V`` is in m/s.  ``backend`` selects the published matrices
    ("as-printed") or the exact Jacobian ("full-jacobian").
    """
    if op_V <= 0:
        raise SingularLinearization(f"cannot linearize at V_x={op_V}")
    if backend not in ("as-printed", "full-jacobian"):
        raise ValueError(f"unknown linearization backend {backend!r}")

    m, R, J, F_N = params.m, params.R, params.J_w, params.F_N
    alpha, beta = surface.alpha, surface.beta
    low = op_lambda <= FRICTION_BREAKPOINT
    branch = "low-slip" if low else "high-slip"

    if backend == "as-printed":
        if low:
            A = np.array([
                [0.0, -alpha * F_N / m],
                [alpha * F_N * R * R * op_lambda / (op_V * op_V * J),
                 alpha * F_N * R * R / (op_V * J)],
            ])
            E = np.array([0.0, -alpha * F_N * R * R * op_lambda / (op_V * J)])
        else:
            # The +-0.1 / +-0.2 interval terms collapse to beta and 2*beta.
            k = F_N * R * R / J
            A = np.array([
                [0.0, F_N / (4.0 * m)],
                [(-op_lambda / 2.0 + 0.75) * k / (op_V * op_V)
                 + beta * k / (op_V * op_V), k / (4.0 * op_V)],
            ])
            E = np.array([
                (-0.75 + beta) * F_N / m,
                (op_lambda / 2.0 - 1.5) * k / op_V + 2.0 * beta * k / op_V,
            ])
    else:
        mu = friction_coefficient(op_lambda, surface)
        dmu = alpha if low else -0.5
        f_V, f_lam = _vector_field(op_V, op_lambda, 0.0, params, surface)
        # d(dV)/dV = 0, d(dV)/dlam = -F_N mu' / m
        a11 = 0.0
        a12 = -F_N * dmu / m
        # dlam = -(1/V) g(lam) F_N mu + R u*/(J V^2), u* fixed at 0
        g = (1.0 - op_lambda) / m + R * R / J
        a21 = (1.0 / (op_V * op_V)) * g * F_N * mu
        a22 = (-1.0 / op_V) * F_N * (-mu / m + g * dmu)
        A = np.array([[a11, a12], [a21, a22]])
        x = np.array([op_V, op_lambda])
        E = np.array([f_V, f_lam]) - A @ x

    B = np.array([0.0, R / (J * op_V * op_V)])
    C = np.array([0.0, 1.0])
    return LinearizedPlant(A=A, B=B, C=C, D=0.0, E=E,
                           op_V=op_V, op_lambda=op_lambda, branch=branch)


def integrate_step(state: VehicleState, M_b: float, dt: float,
                   params: VehicleParams, surface: RoadSurface) -> VehicleState:
    """One classical RK4 step on (V_x, omega) with braking torque held constant.

    Slip is recomputed from the wheel-speed identity after the step; the
    vehicle is floored at rest (V_x = 0, slip = 1).
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if state.V_x <= 0:
        raise VehicleAtRest("cannot integrate from rest")

    R = params.R

    def f(V, w):
        lam = min(1.0, max(0.0, 1.0 - w * R / V)) if V > 0 else 1.0
        s = VehicleState(V_x=max(V, 1e-12), omega=w, lam=lam)
        dV, dw, _ = derivatives(s, M_b, params, surface)
        return dV, dw

    V0, w0 = state.V_x, state.omega
    k1 = f(V0, w0)
    k2 = f(V0 + 0.5 * dt * k1[0], w0 + 0.5 * dt * k1[1])
    k3 = f(V0 + 0.5 * dt * k2[0], w0 + 0.5 * dt * k2[1])
    k4 = f(V0 + dt * k3[0], w0 + dt * k3[1])
    V = V0 + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    w = w0 + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])

    if not (math.isfinite(V) and math.isfinite(w)):
        raise SimulationBlowup(f"non-finite state after RK4 step dt={dt}: V={V}, omega={w}")

    if V <= 0:
        return VehicleState(V_x=0.0, omega=max(w, 0.0), lam=1.0)
    # Keep the wheel physically meaningful while braking: omega in [0, V/R].
    w = min(max(w, 0.0), V / R)
    return VehicleState.from_wheel(V, w, R)
