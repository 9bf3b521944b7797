"""Sampling-mode supervisor: guards, hysteresis, and glitch filtering.

Three sampling modes are supported, ordered by period N0 > N1 > E.
Transitions toward a faster (shorter-period) mode fire immediately;
transitions toward a slower mode must hold for a prefixed number of
consecutive cycles (the debounce filter) so single-sample sensor glitches
cannot slow the controller down.  Velocity guards carry a hysteresis gap:
switch-down thresholds sit below the corresponding switch-up thresholds.

Guards read velocity in km/h; the simulation facade converts from m/s.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Optional


class ModeId(str, enum.Enum):
    N0 = "N0"
    N1 = "N1"
    E = "E"


class BppCategory(enum.IntEnum):
    """Brake-pedal-pressure categories, totally ordered low < high."""

    LOW = 0
    MILD = 1
    MEDIUM = 2
    HIGH = 3


@dataclass(frozen=True)
class SamplingMode:
    id: ModeId
    period: float    # seconds

    def __post_init__(self):
        if self.period <= 0:
            raise ValueError(f"sampling period must be positive, got {self.period}")


#: Default mode periods (seconds); any override must keep N0 > N1 > E.
DEFAULT_MODES = {
    ModeId.N0: SamplingMode(ModeId.N0, 2.0e-4),
    ModeId.N1: SamplingMode(ModeId.N1, 1.5e-4),
    ModeId.E: SamplingMode(ModeId.E, 1.0e-4),
}


def validate_mode_table(modes: dict) -> dict:
    if set(modes) != {ModeId.N0, ModeId.N1, ModeId.E}:
        raise ValueError("mode table must define exactly N0, N1 and E")
    if not modes[ModeId.N0].period > modes[ModeId.N1].period > modes[ModeId.E].period:
        raise ValueError("mode periods must satisfy N0 > N1 > E")
    return modes


@dataclass(frozen=True)
class GuardTable:
    """Velocity breakpoints (km/h) and pedal-pressure cutpoints.

    ``v1``/``v2`` gate upward (toward faster sampling) transitions,
    ``v1_down``/``v2_down`` the corresponding downward ones.
    """

    v1: float = 85.0
    v2: float = 140.0
    v1_down: float = 80.0
    v2_down: float = 135.0
    bpp_cuts: tuple = (0.25, 0.5, 0.75)

    def __post_init__(self):
        if not self.v1_down < self.v1:
            raise ValueError("hysteresis gap v1_down < v1 violated")
        if not self.v2_down < self.v2:
            raise ValueError("hysteresis gap v2_down < v2 violated")
        if len(self.bpp_cuts) != 3 or not all(
                0.0 < a < b for a, b in zip(self.bpp_cuts, self.bpp_cuts[1:] + (1.0,))):
            raise ValueError("bpp cutpoints must be three increasing values in (0, 1)")


@dataclass(frozen=True)
class SupervisorState:
    """Current mode plus debounce bookkeeping for a pending slow-down."""

    mode: ModeId = ModeId.N0
    pending: Optional[ModeId] = None
    streak: int = 0

    def __post_init__(self):
        if self.streak < 0:
            raise ValueError("streak must be non-negative")
        if self.pending == self.mode:
            raise ValueError("pending target must differ from current mode")
        if self.pending is None and self.streak != 0:
            raise ValueError("streak must be zero without a pending target")


def classify_bpp(p: float, table: GuardTable = GuardTable()) -> BppCategory:
    """Map normalized pedal pressure in [0, 1] to a category (boundaries go up)."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"pedal pressure must be in [0, 1], got {p}")
    c1, c2, c3 = table.bpp_cuts
    if p < c1:
        return BppCategory.LOW
    if p < c2:
        return BppCategory.MILD
    if p < c3:
        return BppCategory.MEDIUM
    return BppCategory.HIGH


def guards(v: float, bpp: BppCategory, table: GuardTable = GuardTable()) -> frozenset:
    """The set of satisfied switching predicates at (v, bpp).

    Velocity intervals are half-open [lo, hi); the open-ended arms are
    [hi, infinity).  Returned labels: tau_n0, tau_n0_down, tau_n1,
    tau_n1_down, tau_e.
    """
    if v < 0:
        raise ValueError(f"velocity must be non-negative, got {v}")
    sat = set()
    low_mid = bpp <= BppCategory.MEDIUM
    low_mild = bpp <= BppCategory.MILD
    med_high = bpp >= BppCategory.MEDIUM

    if (v < table.v1 and low_mid) or (table.v1 <= v < table.v2 and low_mild):
        sat.add("tau_n0")
    if (v < table.v1_down and low_mid) or (table.v1_down <= v < table.v2_down and low_mild):
        sat.add("tau_n0_down")
    if (v < table.v1 and bpp == BppCategory.HIGH) \
            or (table.v1 <= v < table.v2 and med_high) \
            or (v >= table.v2 and low_mild):
        sat.add("tau_n1")
    if (v < table.v1_down and bpp == BppCategory.HIGH) \
            or (table.v1_down <= v < table.v2_down and med_high) \
            or (v >= table.v2_down and low_mild):
        sat.add("tau_n1_down")
    if v >= table.v2 and med_high:
        sat.add("tau_e")
    return frozenset(sat)


#: For each mode: (guard, target) for the immediate speed-up transition and
#: the debounced slow-down transition.
_SPEED_UP = {
    ModeId.N0: ("tau_n1", ModeId.N1),
    ModeId.N1: ("tau_e", ModeId.E),
}
_SLOW_DOWN = {
    ModeId.N1: ("tau_n0_down", ModeId.N0),
    ModeId.E: ("tau_n1_down", ModeId.N1),
}


def step(st: SupervisorState, v: float, bpp_raw: float,
         table: GuardTable = GuardTable(), K: int = 3) -> SupervisorState:
    """One supervisory cycle.

    Speed-ups fire immediately, including the N0 -> E short-circuit when the
    emergency guard holds.  Slow-downs fire on the K-th consecutive cycle
    their guard holds; any failing cycle resets the streak.
    """
    if K < 1:
        raise ValueError(f"debounce length must be at least 1, got {K}")
    bpp = classify_bpp(bpp_raw, table)
    sat = guards(v, bpp, table)

    # Emergency short-circuit: any mode jumps straight to E.
    if st.mode != ModeId.E and "tau_e" in sat:
        return SupervisorState(mode=ModeId.E)
    up = _SPEED_UP.get(st.mode)
    if up is not None and up[0] in sat:
        return SupervisorState(mode=up[1])

    down = _SLOW_DOWN.get(st.mode)
    if down is not None and down[0] in sat:
        target = down[1]
        streak = st.streak + 1 if st.pending == target else 1
        if streak >= K:
            return SupervisorState(mode=target)
        return SupervisorState(mode=st.mode, pending=target, streak=streak)
    return SupervisorState(mode=st.mode)


def period(st: SupervisorState, modes: dict = DEFAULT_MODES) -> float:
    """Sampling period of the active mode, in seconds."""
    return modes[st.mode].period
