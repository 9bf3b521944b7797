"""Scenario engine: braking and cruising runs, fixed-vs-multimode
comparison, slip metrics, and shared-ECU co-simulation with the cruise
controller.

All runs are deterministic: identical scenario and config produce
bit-identical traces.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import _kernels
from .errors import ConfigError, SimulationBlowup
from .scheduler import (
    AccMode,
    AccRatePolicy,
    BandwidthReport,
    acc_mode,
    bandwidth,
    co_schedule,
    dwell_stats,
)
from .supervisor import BppCategory, GuardTable, ModeId, SamplingMode, classify_bpp

_MODE_NAMES = {0: "N0", 1: "N1", 2: "E", -1: "fixed"}
_MODE_INTS = {ModeId.N0: 0, ModeId.N1: 1, ModeId.E: 2}


@dataclass(frozen=True)
class ControllerSpec:
    """Which controller drives a run: a fixed period or the mode supervisor."""

    kind: str                     # "fixed" | "multimode"
    T: Optional[float] = None     # required for fixed

    def __post_init__(self):
        if self.kind == "fixed":
            if self.T is None or self.T <= 0:
                raise ConfigError("fixed controller needs a positive period")
        elif self.kind == "multimode":
            if self.T is not None:
                raise ConfigError("multimode controller takes no period")
        else:
            raise ConfigError(f"unknown controller kind {self.kind!r}")

    @classmethod
    def parse(cls, text: str) -> "ControllerSpec":
        """Parse "multimode" or "fixed:<seconds>"."""
        if text == "multimode":
            return cls(kind="multimode")
        if text.startswith("fixed:"):
            try:
                return cls(kind="fixed", T=float(text.split(":", 1)[1]))
            except ValueError as exc:
                raise ConfigError(f"bad fixed period in {text!r}") from exc
        raise ConfigError(f"unknown controller spec {text!r}")

    def label(self) -> str:
        return "multimode" if self.kind == "multimode" else f"fixed:{self.T:g}"


@dataclass(frozen=True)
class Scenario:
    kind: str                     # "braking" | "cruising"
    v0: float                     # km/h
    surface: str
    controller: ControllerSpec
    lambda_d: float = 0.2
    bpp: float = 1.0              # sustained pedal pressure (panic braking = 1.0)
    duration: Optional[float] = None
    profile: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("braking", "cruising"):
            raise ConfigError(f"unknown scenario kind {self.kind!r}")
        if self.v0 <= 0:
            raise ConfigError("initial speed must be positive")
        if not 0.0 < self.lambda_d < 1.0:
            raise ConfigError("desired slip must be in (0, 1)")


@dataclass(frozen=True)
class DriveProfile:
    """Piecewise drive profile: time, set speed (km/h), pedal pressure, surface."""

    t: np.ndarray
    v_set: np.ndarray
    bpp: np.ndarray
    surface: np.ndarray

    def __post_init__(self):
        if len(self.t) < 2:
            raise ConfigError("profile needs at least two rows")
        if np.any(np.diff(self.t) <= 0):
            raise ConfigError("profile timestamps must be strictly increasing")
        if np.any(self.v_set < 0) or np.any((self.bpp < 0) | (self.bpp > 1)):
            raise ConfigError("profile values out of domain")

    @classmethod
    def from_csv(cls, path) -> "DriveProfile":
        t, v, b, s = [], [], [], []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            required = {"t", "v_set", "bpp", "surface"}
            if reader.fieldnames is None or not required.issubset(reader.fieldnames):
                raise ConfigError(f"profile {path} must have header t,v_set,bpp,surface")
            for i, row in enumerate(reader):
                try:
                    t.append(float(row["t"]))
                    v.append(float(row["v_set"]))
                    b.append(float(row["bpp"]))
                    s.append(row["surface"])
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"profile {path} row {i + 1}: {exc}") from exc
        return cls(t=np.array(t), v_set=np.array(v), bpp=np.array(b),
                   surface=np.array(s, dtype=object))


@dataclass(frozen=True)
class SimTrace:
    """Uniform control-cycle records of a scenario run."""

    t: np.ndarray
    V_x: np.ndarray
    omega: np.ndarray
    lam: np.ndarray
    M_b: np.ndarray
    mode: np.ndarray              # int codes, -1 = fixed
    period: np.ndarray

    def mode_names(self):
        return [_MODE_NAMES[int(m)] for m in self.mode]

    def mode_trace(self):
        """(timestamp, mode name) samples suitable for dwell accounting."""
        out = [(float(self.t[0]), _MODE_NAMES[int(self.mode[0])])]
        for i in range(1, len(self.t)):
            if self.mode[i] != self.mode[i - 1]:
                out.append((float(self.t[i]), _MODE_NAMES[int(self.mode[i])]))
        if len(self.t) > 1:
            out.append((float(self.t[-1]), _MODE_NAMES[int(self.mode[-1])]))
        return out


def _run_config(cfg):
    """Unpack the pieces of a Config the kernels need."""
    p = cfg.vehicle
    g = cfg.gains
    gt = cfg.guard_table
    periods = (cfg.modes[ModeId.N0].period, cfg.modes[ModeId.N1].period,
               cfg.modes[ModeId.E].period)
    return p, g, gt, periods


def run_braking(sc: Scenario, cfg) -> tuple:
    """Brake from sc.v0 to rest; returns (trace, stopping distance m, report)."""
    if sc.kind != "braking":
        raise ConfigError("run_braking requires a braking scenario")
    surface = cfg.surface(sc.surface)
    p, g, gt, periods = _run_config(cfg)
    multimode = sc.controller.kind == "multimode"
    fixed_T = sc.controller.T if not multimode else periods[2]
    min_T = min(periods) if multimode else fixed_T
    t_max = cfg.numerics.t_max
    max_steps = int(t_max / min_T) + 8

    t = np.empty(max_steps)
    V = np.empty(max_steps)
    w = np.empty(max_steps)
    lam = np.empty(max_steps)
    mb = np.empty(max_steps)
    mode = np.empty(max_steps, dtype=np.int8)
    per = np.empty(max_steps)

    n, distance, status = _kernels.braking_run(
        sc.v0 / 3.6, sc.lambda_d, sc.bpp,
        p.m, p.R, p.J_w, p.F_N, surface.alpha, surface.beta,
        g.Kp, g.Ki, g.Kd, cfg.numerics.mb_max,
        multimode, fixed_T,
        periods[0], periods[1], periods[2],
        gt.v1, gt.v2, gt.v1_down, gt.v2_down,
        gt.bpp_cuts[0], gt.bpp_cuts[1], gt.bpp_cuts[2],
        cfg.debounce, _MODE_INTS[cfg.start_mode],
        cfg.numerics.substeps, cfg.numerics.rest_speed, t_max,
        t, V, w, lam, mb, mode, per)

    trace = SimTrace(t=t[:n].copy(), V_x=V[:n].copy(), omega=w[:n].copy(),
                     lam=lam[:n].copy(), M_b=mb[:n].copy(),
                     mode=mode[:n].copy(), period=per[:n].copy())
    if status == _kernels.STATUS_BLOWUP:
        raise SimulationBlowup(
            f"non-finite state in braking run at step {n} (trace prefix attached)",
            step=n)

    if multimode:
        report = bandwidth(dwell_stats(trace.mode_trace()),
                           {m.value: cfg.modes[m].period for m in cfg.modes},
                           cfg.wcet)
    else:
        T_e = periods[2]
        util = cfg.wcet / fixed_T
        base = cfg.wcet / T_e
        report = BandwidthReport(dwell={"fixed": 1.0}, utilization=util,
                                 baseline_utilization=base,
                                 savings=1.0 - util / base)
    return trace, float(distance), report


def run_cruising(profile: DriveProfile, cfg, trace_stride: int = 100) -> tuple:
    """Supervised cruise along a profile; returns (trace, report)."""
    p, g, gt, periods = _run_config(cfg)
    duration = float(profile.t[-1] - profile.t[0])
    max_steps = int(duration / min(periods)) + 8
    n_trace = max_steps // trace_stride + 8

    t = np.empty(n_trace)
    V = np.empty(n_trace)
    w = np.empty(n_trace)
    lam = np.empty(n_trace)
    mb = np.empty(n_trace)
    mode = np.empty(n_trace, dtype=np.int8)
    per = np.empty(n_trace)
    trans_t = np.empty(max_steps + 2)
    trans_mode = np.empty(max_steps + 2, dtype=np.int8)

    surface = cfg.surface(str(profile.surface[0]))
    n, ntr, dwell_s, status = _kernels.cruise_run(
        profile.t, profile.v_set, profile.bpp,
        p.m, p.R, p.J_w, p.F_N, surface.alpha, surface.beta,
        g.Kp, g.Ki, g.Kd, cfg.numerics.mb_max, cfg.numerics.lambda_d,
        periods[0], periods[1], periods[2],
        gt.v1, gt.v2, gt.v1_down, gt.v2_down,
        gt.bpp_cuts[0], gt.bpp_cuts[1], gt.bpp_cuts[2],
        cfg.debounce, _MODE_INTS[cfg.start_mode],
        cfg.numerics.substeps, trace_stride,
        t, V, w, lam, mb, mode, per, trans_t, trans_mode)
    if status == _kernels.STATUS_BLOWUP:
        raise SimulationBlowup("non-finite state in cruise run")

    trace = SimTrace(t=t[:n].copy(), V_x=V[:n].copy(), omega=w[:n].copy(),
                     lam=lam[:n].copy(), M_b=mb[:n].copy(),
                     mode=mode[:n].copy(), period=per[:n].copy())
    total = float(np.sum(dwell_s))
    dwell = {name: float(dwell_s[i]) / total for i, name in enumerate(("N0", "N1", "E"))
             if dwell_s[i] > 0}
    report = bandwidth(dwell, {m.value: cfg.modes[m].period for m in cfg.modes},
                       cfg.wcet)
    transitions = [(float(trans_t[i]), _MODE_NAMES[int(trans_mode[i])])
                   for i in range(ntr)]
    return trace, report, transitions


def slip_metrics(trace: SimTrace, lambda_d: float, v_floor: float) -> dict:
    """Slip tracking quality over the samples above the rest floor."""
    if len(trace.t) == 0:
        raise ValueError("empty trace")
    mask = trace.V_x > v_floor
    lam = trace.lam[mask]
    if len(lam) == 0:
        return {"rmse": float("nan"), "variance": float("nan"),
                "max_overshoot": float("nan")}
    dev = lam - lambda_d
    return {
        "rmse": float(np.sqrt(np.mean(dev ** 2))),
        "variance": float(np.var(lam)),
        "max_overshoot": float(np.max(np.maximum(dev, 0.0))),
    }


def compare(sc: Scenario, variants, cfg) -> dict:
    """Run each controller variant on the identical scenario and tabulate.

    Per-variant failures are recorded and the comparison proceeds with the
    survivors.
    """
    if len(variants) < 2:
        raise ConfigError("compare needs at least two controller variants")
    rows = {}
    for idx, spec in enumerate(variants):
        label = spec.label()
        if label in rows:                       # repeated variants stay distinct
            label = f"{label}#{idx + 1}"
        try:
            trace, dist, report = run_braking(replace(sc, controller=spec), cfg)
            metrics = slip_metrics(trace, sc.lambda_d, cfg.numerics.rest_speed)
            rows[label] = {
                "stopping_distance_m": dist,
                "slip": metrics,
                "bandwidth_savings": report.savings,
                "utilization": report.utilization,
                "failed": False,
            }
        except Exception as exc:
            rows[label] = {"failed": True, "error": repr(exc)}
    ok = {k: v for k, v in rows.items() if not v["failed"]}
    pairwise = {}
    labels = list(ok)
    for i in range(len(labels)):
        for j in range(i + 1, len(labels)):
            a, b = labels[i], labels[j]
            da, db = ok[a]["stopping_distance_m"], ok[b]["stopping_distance_m"]
            pairwise[f"{a} vs {b}"] = {
                "distance_rel_diff": abs(da - db) / max(da, db) if max(da, db) > 0 else 0.0,
            }
    return {"variants": rows, "pairwise": pairwise}


def run_acc_shared(profile: DriveProfile, cfg) -> dict:
    """Co-schedule the braking and cruise controllers on one ECU.

    The cruise controller is a proportional-integral speed tracker toward the
    profile set speed; its scheduling state follows the pedal-pressure
    category.  Returns reports for both tasks plus the combined utilization
    trace, asserting utilization <= 1 throughout.
    """
    if not cfg.acc_enabled:
        raise ConfigError("shared-ECU run requires the cruise-control feature enabled")
    _, report_abs, transitions = run_cruising(profile, cfg)[0:3]
    policy = cfg.acc_policy

    # segment boundaries: supervisor transitions plus profile rows
    bounds = sorted({t for t, _ in transitions} | {float(t) for t in profile.t})
    mode_at = _step_lookup(transitions)
    seg = []
    util_peak = 0.0
    busy = 0.0
    acc_dwell = {m.value: 0.0 for m in AccMode}
    for t0, t1 in zip(bounds, bounds[1:]):
        if t1 <= t0:
            continue
        mid = 0.5 * (t0 + t1)
        mode_name = mode_at(mid)
        T_abs = {m.value: cfg.modes[m].period for m in cfg.modes}[mode_name]
        row = int(np.searchsorted(profile.t, mid, side="right") - 1)
        cat = classify_bpp(float(profile.bpp[row]), cfg.guard_table)
        am = acc_mode(cat, True)
        T_abs, T_acc = co_schedule(T_abs, am, policy, abs_wcet=cfg.wcet)
        util = cfg.wcet / T_abs + (policy.wcet / T_acc if T_acc else 0.0)
        util_peak = max(util_peak, util)
        busy += util * (t1 - t0)
        acc_dwell[am.value] += t1 - t0
        seg.append({"t0": t0, "t1": t1, "abs_mode": mode_name,
                    "acc_mode": am.value, "T_abs": T_abs, "T_acc": T_acc,
                    "utilization": util})
    total = bounds[-1] - bounds[0]
    combined_mean = busy / total
    baseline = cfg.wcet / cfg.modes[ModeId.E].period + policy.wcet / policy.fast

    # cruise-control PI speed tracking, sampled at its scheduled period
    acc_trace = _acc_speed_trace(profile, cfg, seg)

    return {
        "abs_report": report_abs,
        "acc_dwell": {k: v / total for k, v in acc_dwell.items()},
        "segments": seg,
        "combined_mean_utilization": combined_mean,
        "combined_peak_utilization": util_peak,
        "baseline_two_fixed_utilization": baseline,
        "acc_trace": acc_trace,
    }


def _step_lookup(transitions):
    times = [t for t, _ in transitions]
    names = [m for _, m in transitions]

    def at(t):
        i = int(np.searchsorted(times, t, side="right") - 1)
        return names[max(i, 0)]
    return at


def _acc_speed_trace(profile: DriveProfile, cfg, segments) -> dict:
    """Discrete PI tracking of the set speed, stepped at the scheduled period."""
    Kp, Ki = cfg.acc_gains
    v = float(profile.v_set[0])
    integ = 0.0
    ts, vs = [], []
    for s in segments:
        T = s["T_acc"]
        if T is None:
            continue
        t = s["t0"]
        while t < s["t1"]:
            row = int(np.searchsorted(profile.t, t, side="right") - 1)
            err = float(profile.v_set[row]) - v
            integ += err * T
            accel = Kp * err + Ki * integ
            accel = min(max(accel, -30.0), 10.0)  # km/h per s, comfort bounds
            v = max(v + accel * T, 0.0)
            ts.append(t)
            vs.append(v)
            t += T
    return {"t": np.array(ts), "v": np.array(vs)}
