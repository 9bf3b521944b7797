"""ECU bandwidth accounting and static cyclic schedule construction.

Utilization of a control task is wcet/period; the bandwidth saving of a
multi-mode run is measured against the fixed emergency-rate baseline and
depends only on mode dwell fractions and period ratios, never on the wcet.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .errors import InfeasibleSchedule
from .supervisor import BppCategory, ModeId

#: Resolution of the cyclic table; all task periods must be exact multiples.
BASE_TICK = 1.0e-5


@dataclass(frozen=True)
class ControlTask:
    name: str
    period: float    # s
    wcet: float      # s, per-job execution cost

    def __post_init__(self):
        if not 0.0 < self.wcet <= self.period:
            raise ValueError(f"need 0 < wcet <= period for task {self.name!r}")


class AccMode(str, enum.Enum):
    ACTIVE = "active"
    SUSPENDED = "suspended"
    IDLE = "idle"


@dataclass(frozen=True)
class BandwidthReport:
    dwell: dict                   # mode name -> fraction of scenario time
    utilization: float            # dwell-weighted wcet/period
    baseline_utilization: float   # fixed emergency-rate utilization
    savings: float                # 1 - utilization/baseline

    def __post_init__(self):
        total = sum(self.dwell.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"dwell fractions must sum to 1, got {total}")


@dataclass(frozen=True)
class CyclicSchedule:
    hyperperiod: float
    slots: tuple                  # ordered (release offset, task name)


def dwell_stats(mode_trace) -> dict:
    """Fraction of trace time spent in each mode.

    ``mode_trace`` is a sequence of (timestamp, mode) samples with strictly
    increasing timestamps; each mode holds until the next timestamp, so the
    final sample only closes the trace.
    """
    trace = list(mode_trace)
    if len(trace) < 2:
        raise ValueError("mode trace needs at least two samples")
    times = [t for t, _ in trace]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError("mode trace timestamps must be strictly increasing")
    total = times[-1] - times[0]
    dwell: dict = {}
    for (t0, mode), (t1, _) in zip(trace, trace[1:]):
        key = mode.value if isinstance(mode, enum.Enum) else mode
        dwell[key] = dwell.get(key, 0.0) + (t1 - t0) / total
    return dwell


def bandwidth(dwell: dict, modes: dict, wcet: float) -> BandwidthReport:
    """Dwell-weighted ECU utilization versus the fixed emergency-rate baseline.

    ``modes`` maps mode name to sampling period; the baseline runs the task
    at the shortest (emergency) period the whole time.
    """
    total = sum(dwell.values())
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"dwell fractions must sum to 1, got {total}")
    periods = {k.value if isinstance(k, enum.Enum) else k: v for k, v in modes.items()}
    T_e = min(periods.values())
    util = sum(frac * wcet / periods[m] for m, frac in dwell.items())
    baseline = wcet / T_e
    return BandwidthReport(dwell=dict(dwell), utilization=util,
                           baseline_utilization=baseline,
                           savings=1.0 - util / baseline)


def acc_mode(bpp: BppCategory, feature_on: bool) -> AccMode:
    """Cruise-control scheduling state: overridden by hard braking."""
    if not feature_on:
        return AccMode.IDLE
    if bpp == BppCategory.HIGH:
        return AccMode.SUSPENDED
    return AccMode.ACTIVE


@dataclass(frozen=True)
class AccRatePolicy:
    fast: float = 5.0e-4
    slow: float = 2.0e-3
    wcet: float = 2.0e-5

    def __post_init__(self):
        if not 0.0 < self.fast < self.slow:
            raise ValueError("need 0 < fast period < slow period")


def co_schedule(abs_period: float, acc: AccMode,
                policy: AccRatePolicy = AccRatePolicy(),
                abs_wcet: float = 2.0e-5) -> tuple:
    """Periods for the braking and cruise controllers sharing one ECU.

    Returns (T_abs, T_acc); T_acc is None when the cruise controller is idle.
    The braking supervisor's demanded period is never lengthened.
    """
    if acc == AccMode.IDLE:
        return abs_period, None
    T_acc = policy.slow if acc == AccMode.SUSPENDED else policy.fast
    util = abs_wcet / abs_period + policy.wcet / T_acc
    if util > 1.0:
        raise InfeasibleSchedule(
            f"combined utilization {util:.3f} > 1 for (T_abs={abs_period}, T_acc={T_acc})")
    return abs_period, T_acc


def cyclic_schedule(tasks, base_tick: float = BASE_TICK) -> CyclicSchedule:
    """Non-preemptive static table over the hyperperiod of the task set.

    Periods are rationalized to the base tick; releases sit at exact period
    multiples and ties within a tick go to the shorter period.  Feasibility
    requires that in every window of length min-period starting at a tick,
    the total demand released inside never exceeds the window.
    """
    tasks = list(tasks)
    if not tasks:
        raise ValueError("empty task set")
    util = sum(t.wcet / t.period for t in tasks)
    if util > 1.0 + 1e-12:
        raise InfeasibleSchedule(f"total utilization {util:.3f} > 1")

    ticks = []
    for t in tasks:
        k = t.period / base_tick
        if abs(k - round(k)) > 1e-6:
            raise InfeasibleSchedule(
                f"period {t.period} of {t.name!r} not representable on {base_tick} s tick")
        ticks.append(int(round(k)))
    hyper_ticks = math.lcm(*ticks)
    hyperperiod = hyper_ticks * base_tick

    slots = []
    for t, k in zip(tasks, ticks):
        for r in range(0, hyper_ticks, k):
            slots.append((r * base_tick, t.name, t.period, t.wcet))
    slots.sort(key=lambda s: (s[0], s[2]))

    p_min = min(t.period for t in tasks)
    p_min_ticks = min(ticks)
    release_ticks = [(int(round(s[0] / base_tick)), s[3]) for s in slots]
    for w_start_tick in range(hyper_ticks):
        # periodic wrap: a release falls in the window iff its offset from the
        # window start, mod the hyperperiod, is below the window length
        demand = sum(w for r, w in release_ticks
                     if (r - w_start_tick) % hyper_ticks < p_min_ticks)
        if demand > p_min + 1e-12:
            raise InfeasibleSchedule(
                f"overloaded window at t={w_start_tick * base_tick:.6g}: "
                f"demand {demand:.6g} > {p_min:.6g}")

    return CyclicSchedule(hyperperiod=hyperperiod,
                          slots=tuple((s[0], s[1]) for s in slots))
