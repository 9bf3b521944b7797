"""Command-line front end.

Subcommands cover stability-surface and Bode CSV export, scenario
simulation, controller comparison, canned regression bundles, and drive
profile generation.  Every output file gets a sibling manifest recording
the command, config hash, tool version, and output list; all numbers are
rendered with 17 significant digits so they round-trip exactly.

Exit codes: 0 success, 2 config/usage error, 3 numeric analysis failure,
4 scenario infeasible, 5 simulation blowup, 1 failed regression check.
"""

from __future__ import annotations

import argparse
import datetime
import os
import sys
import tempfile
from importlib import resources

import numpy as np

from . import __version__, config as config_mod
from .discretization import PidGains
from .errors import (
    ConfigError,
    ConvergenceError,
    InfeasibleSchedule,
    NumericError,
    SimulationBlowup,
)
from .plant import linearize
from .simulator import (
    ControllerSpec,
    DriveProfile,
    Scenario,
    compare,
    run_acc_shared,
    run_braking,
    run_cruising,
    slip_metrics,
)
from .stability import KMH_TO_MS, bode_data, closed_loop, state_space_to_tf, stability_surface
from .supervisor import ModeId

_ENV_CONFIG = "MMCTRL_CONFIG"


# ---------------------------------------------------------------------------
# serialization helpers

def _fmt(x) -> str:
    """Render a number with 17 significant digits (float round-trip safe)."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _json_text(obj, indent: int = 0) -> str:
    """Serialize dict/list/scalar structures with controlled float rendering."""
    pad = "  " * indent
    pad1 = "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad1}"{k}": {_json_text(v, indent + 1)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        items = [f"{pad1}{_json_text(v, indent + 1)}" for v in seq]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        if not np.isfinite(f):
            return "null"
        return _fmt(f)
    text = str(obj)
    escaped = text.replace("\\", "\\\\").replace('"', '\\"')
    return f'"{escaped}"'


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_csv(path: str, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(c if isinstance(c, str) else _fmt(c) for c in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def _write_json(path: str, obj) -> None:
    _atomic_write(path, _json_text(obj) + "\n")


def _write_manifest(path: str, cfg, argv, outputs) -> None:
    _write_json(path, {
        "command": list(argv),
        "config_hash": cfg.config_hash(),
        "version": __version__,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "outputs": sorted(outputs),
    })


def _load_config(args):
    path = args.config or os.environ.get(_ENV_CONFIG) or None
    return config_mod.load(path)


def _parse_range(text: str):
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"range must be lo:hi:step, got {text!r}")
    try:
        lo, hi, step = (float(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"bad range {text!r}") from exc
    if step <= 0 or hi < lo:
        raise ConfigError(f"need lo <= hi and step > 0 in {text!r}")
    return lo, hi, step


def _shipped_profile(name: str) -> str:
    return str(resources.files("mmctrl.data").joinpath("profiles").joinpath(f"{name}.csv"))


def _load_profile(path: str) -> DriveProfile:
    if not os.path.exists(path) and os.path.sep not in path:
        shipped = _shipped_profile(path.removesuffix(".csv"))
        if os.path.exists(shipped):
            path = shipped
    return DriveProfile.from_csv(path)


# ---------------------------------------------------------------------------
# report serialization

def _report_dict(report) -> dict:
    return {
        "dwell": report.dwell,
        "utilization": report.utilization,
        "baseline_utilization": report.baseline_utilization,
        "savings": report.savings,
    }


def _trace_rows(trace):
    names = trace.mode_names()
    for i in range(len(trace.t)):
        yield (trace.t[i], trace.V_x[i], trace.omega[i], trace.lam[i],
               trace.M_b[i], names[i], trace.period[i])


_TRACE_HEADER = ("t", "V_x", "omega", "lambda", "M_b", "mode", "period")


# ---------------------------------------------------------------------------
# subcommands

def cmd_stability_surface(args, cfg, argv) -> int:
    surf = stability_surface(
        _parse_range(args.v), _parse_range(getattr(args, "lambda")),
        args.ts, cfg.vehicle, cfg.surface(args.surface), cfg.gains,
        backend=cfg.numerics.backend, discretize=cfg.numerics.discretize)
    rows = []
    for i, v in enumerate(surf.v_axis):
        for j, lam in enumerate(surf.lambda_axis):
            rows.append((v, lam, surf.values[i, j]))
    _write_csv(args.out, ("v_kmh", "lambda", "max_pole_mag"), rows)
    _write_manifest(args.out + ".manifest.json", cfg, argv, [args.out])
    if surf.diagnostics:
        print(f"{len(surf.diagnostics)} grid cells failed numerically "
              f"(recorded as nan)", file=sys.stderr)
    return 0


def cmd_bode(args, cfg, argv) -> int:
    lp = linearize(args.v * KMH_TO_MS, args.op_lambda, cfg.vehicle,
                   cfg.surface(args.surface), backend=cfg.numerics.backend)
    sysd = closed_loop(lp, cfg.gains, args.ts, backend=cfg.numerics.discretize)
    tf = state_space_to_tf(sysd)
    data = bode_data(tf, args.points)
    rows = zip(data.omega, data.magnitude_db, data.phase_deg)
    _write_csv(args.out, ("omega_rad_s", "mag_db", "phase_deg"), rows)
    _write_manifest(args.out + ".manifest.json", cfg, argv, [args.out])
    return 0


def cmd_simulate(args, cfg, argv) -> int:
    prefix = args.out_prefix
    outputs = []
    if args.scenario == "braking":
        sc = Scenario(kind="braking", v0=args.v0, surface=args.surface,
                      controller=ControllerSpec.parse(args.controller),
                      lambda_d=cfg.numerics.lambda_d)
        trace, distance, report = run_braking(sc, cfg)
        _write_csv(prefix + "-trace.csv", _TRACE_HEADER, _trace_rows(trace))
        _write_json(prefix + "-report.json", {
            "scenario": "braking", "controller": sc.controller.label(),
            "surface": sc.surface, "v0_kmh": sc.v0,
            "stopping_distance_m": distance,
            "slip": slip_metrics(trace, sc.lambda_d, cfg.numerics.rest_speed),
            "bandwidth": _report_dict(report),
        })
    elif args.scenario == "cruise":
        profile = _load_profile(args.profile)
        trace, report, transitions = run_cruising(profile, cfg)
        _write_csv(prefix + "-trace.csv", _TRACE_HEADER, _trace_rows(trace))
        _write_csv(prefix + "-dwell.csv", ("t_start", "t_end", "mode"),
                   [(t0, t1, m0) for (t0, m0), (t1, _) in
                    zip(transitions, transitions[1:])])
        _write_json(prefix + "-report.json", {
            "scenario": "cruise", "profile": args.profile,
            "bandwidth": _report_dict(report),
            "transitions": [{"t": t, "mode": m} for t, m in transitions],
        })
        outputs.append(prefix + "-dwell.csv")
    else:  # acc-shared
        profile = _load_profile(args.profile)
        result = run_acc_shared(profile, cfg)
        acc = result["acc_trace"]
        _write_csv(prefix + "-acc-trace.csv", ("t", "v_kmh"),
                   zip(acc["t"], acc["v"]))
        _write_json(prefix + "-report.json", {
            "scenario": "acc-shared", "profile": args.profile,
            "abs_bandwidth": _report_dict(result["abs_report"]),
            "acc_dwell": result["acc_dwell"],
            "combined_mean_utilization": result["combined_mean_utilization"],
            "combined_peak_utilization": result["combined_peak_utilization"],
            "baseline_two_fixed_utilization": result["baseline_two_fixed_utilization"],
            "segments": result["segments"],
        })
        outputs.append(prefix + "-acc-trace.csv")
    if args.scenario != "acc-shared":
        outputs.append(prefix + "-trace.csv")
    outputs.append(prefix + "-report.json")
    _write_manifest(prefix + "-manifest.json", cfg, argv, outputs)
    return 0


def cmd_compare(args, cfg, argv) -> int:
    if len(args.controller) < 2:
        raise ConfigError("compare needs at least two --controller variants")
    variants = [ControllerSpec.parse(c) for c in args.controller]
    sc = Scenario(kind="braking", v0=args.v0, surface=args.surface,
                  controller=variants[0], lambda_d=cfg.numerics.lambda_d)
    table = compare(sc, variants, cfg)
    _write_json(args.out, table)
    _write_manifest(args.out + ".manifest.json", cfg, argv, [args.out])
    return 0


# ---------------------------------------------------------------------------
# regression bundles

def _bundle_stopping_distance(cfg, out_dir):
    """Four surfaces x {multimode, fixed emergency rate}: ordering + gap."""
    surfaces = ("dry_asphalt", "gravel", "loose_gravel", "wet")
    T_e = cfg.modes[ModeId.E].period
    results, outputs = {}, []
    for surface in surfaces:
        row = {}
        for spec in (ControllerSpec("multimode"), ControllerSpec("fixed", T_e)):
            sc = Scenario(kind="braking", v0=200.0, surface=surface,
                          controller=spec, lambda_d=cfg.numerics.lambda_d)
            _, dist, _ = run_braking(sc, cfg)
            row[spec.label()] = dist
        results[surface] = row
    mm = [results[s]["multimode"] for s in surfaces]
    checks = {
        "surface_ordering": bool(all(a < b for a, b in zip(mm, mm[1:]))),
        "fixed_vs_multimode_gap_max": max(
            abs(r["multimode"] - r[f"fixed:{T_e:g}"]) / r[f"fixed:{T_e:g}"]
            for r in results.values()),
    }
    checks["gap_below_1pct"] = bool(checks["fixed_vs_multimode_gap_max"] <= 0.01)
    path = os.path.join(out_dir, "stopping-distance.json")
    _write_json(path, {"results": results, "checks": checks})
    outputs.append(path)
    ok = checks["surface_ordering"] and checks["gap_below_1pct"]
    return ok, checks, outputs


def _bundle_slip_contrast(cfg, out_dir):
    """Coarse-vs-fine sampling period slip traces on the same scenario."""
    sc_cfg = cfg.slip_contrast
    from dataclasses import replace as _replace
    cfg_local = _replace(cfg, gains=sc_cfg.gains)
    outputs, metrics = [], {}
    for label, T in (("coarse", sc_cfg.coarse_T), ("fine", sc_cfg.fine_T)):
        sc = Scenario(kind="braking", v0=sc_cfg.v0, surface="dry_asphalt",
                      controller=ControllerSpec("fixed", T),
                      lambda_d=cfg.numerics.lambda_d)
        trace, dist, _ = run_braking(sc, cfg_local)
        path = os.path.join(out_dir, f"slip-contrast-{label}.csv")
        _write_csv(path, _TRACE_HEADER, _trace_rows(trace))
        outputs.append(path)
        m = slip_metrics(trace, cfg.numerics.lambda_d, sc_cfg.v_floor)
        lam = trace.lam[trace.V_x > sc_cfg.v_floor]
        tail = lam[max(1, int(0.2 * len(lam))):]
        metrics[label] = {**m, "distance_m": dist,
                          "tail_min": float(tail.min()) if len(tail) else None,
                          "tail_max": float(tail.max()) if len(tail) else None}
    ratio = metrics["coarse"]["variance"] / metrics["fine"]["variance"]
    band = (cfg.numerics.lambda_d - 0.1, cfg.numerics.lambda_d + 0.1)
    checks = {
        "variance_ratio": ratio,
        "variance_ratio_ge_2": bool(ratio >= 2.0),
        "fine_tail_in_band": bool(
            metrics["fine"]["tail_min"] is not None
            and band[0] <= metrics["fine"]["tail_min"]
            and metrics["fine"]["tail_max"] <= band[1]),
    }
    path = os.path.join(out_dir, "slip-contrast.json")
    _write_json(path, {"metrics": metrics, "checks": checks})
    outputs.append(path)
    return checks["variance_ratio_ge_2"] and checks["fine_tail_in_band"], checks, outputs


def _bundle_braking_bandwidth(cfg, out_dir):
    """Multi-mode panic-braking dwell and bandwidth versus the fixed baseline."""
    sc = Scenario(kind="braking", v0=200.0, surface="dry_asphalt",
                  controller=ControllerSpec("multimode"),
                  lambda_d=cfg.numerics.lambda_d)
    trace, dist, report = run_braking(sc, cfg)
    path = os.path.join(out_dir, "braking-bandwidth.json")
    checks = {
        "savings": report.savings,
        "savings_nonnegative": bool(report.savings >= 0.0),
        "utilization_le_baseline": bool(
            report.utilization <= report.baseline_utilization + 1e-12),
    }
    _write_json(path, {"stopping_distance_m": dist,
                       "bandwidth": _report_dict(report), "checks": checks})
    return (checks["savings_nonnegative"]
            and checks["utilization_le_baseline"]), checks, [path]


def _bundle_cruise_bandwidth(cfg, out_dir):
    """City-cruising fixture: multi-mode savings against the fixed baseline."""
    profile = DriveProfile.from_csv(_shipped_profile("city"))
    trace, report, transitions = run_cruising(profile, cfg)
    path = os.path.join(out_dir, "cruise-bandwidth.json")
    checks = {
        "savings": report.savings,
        "savings_in_30_50pct": bool(0.30 <= report.savings <= 0.50),
    }
    _write_json(path, {
        "bandwidth": _report_dict(report),
        "transitions": [{"t": t, "mode": m} for t, m in transitions],
        "checks": checks,
    })
    return checks["savings_in_30_50pct"], checks, [path]


def _bundle_ecu_sharing(cfg, out_dir):
    """Highway fixture with the cruise controller co-scheduled on one ECU."""
    profile = DriveProfile.from_csv(_shipped_profile("highway"))
    result = run_acc_shared(profile, cfg)
    path = os.path.join(out_dir, "ecu-sharing.json")
    checks = {
        "combined_peak_utilization": result["combined_peak_utilization"],
        "peak_utilization_le_1": bool(result["combined_peak_utilization"] <= 1.0),
        "mean_below_two_fixed_baseline": bool(
            result["combined_mean_utilization"]
            < result["baseline_two_fixed_utilization"]),
    }
    _write_json(path, {
        "abs_bandwidth": _report_dict(result["abs_report"]),
        "acc_dwell": result["acc_dwell"],
        "combined_mean_utilization": result["combined_mean_utilization"],
        "combined_peak_utilization": result["combined_peak_utilization"],
        "baseline_two_fixed_utilization": result["baseline_two_fixed_utilization"],
        "checks": checks,
    })
    return (checks["peak_utilization_le_1"]
            and checks["mean_below_two_fixed_baseline"]), checks, [path]


_BUNDLES = {
    "stopping-distance": _bundle_stopping_distance,
    "slip-contrast": _bundle_slip_contrast,
    "braking-bandwidth": _bundle_braking_bandwidth,
    "cruise-bandwidth": _bundle_cruise_bandwidth,
    "ecu-sharing": _bundle_ecu_sharing,
}


def cmd_reproduce(args, cfg, argv) -> int:
    os.makedirs(args.out_dir, exist_ok=True)
    names = list(_BUNDLES) if args.bundle == "all" else [args.bundle]
    all_ok = True
    outputs, summary = [], {}
    for name in names:
        ok, checks, files = _BUNDLES[name](cfg, args.out_dir)
        summary[name] = {"passed": bool(ok), "checks": checks}
        outputs.extend(files)
        all_ok = all_ok and ok
        print(f"{name}: {'PASS' if ok else 'FAIL'}")
    summary_path = os.path.join(args.out_dir, "summary.json")
    _write_json(summary_path, summary)
    outputs.append(summary_path)
    _write_manifest(os.path.join(args.out_dir, "manifest.json"), cfg, argv, outputs)
    return 0 if all_ok else 1


# ---------------------------------------------------------------------------
# profile generation

def cmd_make_profile(args, cfg, argv) -> int:
    rng = np.random.default_rng(args.seed)
    rows = [(0.0, 0.0, 0.0, args.surface)]
    t, v = 0.0, 0.0
    while t < args.duration:
        t += float(rng.uniform(5.0, 20.0))
        kind = rng.random()
        if kind < 0.55:                       # cruise / speed change
            v = float(np.clip(v + rng.normal(0.0, 25.0), 0.0, 200.0))
            bpp = 0.0
        elif kind < 0.85:                     # moderate braking
            v = max(v - float(rng.uniform(5.0, 30.0)), 0.0)
            bpp = float(rng.uniform(0.1, 0.7))
        else:                                 # hard braking
            v = max(v - float(rng.uniform(20.0, 60.0)), 0.0)
            bpp = float(rng.uniform(0.75, 1.0))
        rows.append((min(t, args.duration), v, bpp, args.surface))
    if rows[-1][0] < args.duration:
        rows.append((args.duration, v, 0.0, args.surface))
    _write_csv(args.out, ("t", "v_set", "bpp", "surface"), rows)
    _write_manifest(args.out + ".manifest.json", cfg, argv, [args.out])
    return 0


# ---------------------------------------------------------------------------
# argument parsing and dispatch

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmctrl",
        description="Multi-mode sampling-period analysis and simulation "
                    "for embedded braking control")
    parser.add_argument("--config", help=f"config JSON path (default: "
                        f"${_ENV_CONFIG} or the shipped default)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stability-surface",
                       help="max closed-loop pole magnitude over a (v, slip) grid")
    p.add_argument("--ts", type=float, required=True, help="sampling period, s")
    p.add_argument("--v", default="0:200:5", help="velocity grid lo:hi:step, km/h")
    p.add_argument("--lambda", default="0:1:0.05", help="slip grid lo:hi:step")
    p.add_argument("--surface", default="dry_asphalt")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_stability_surface)

    p = sub.add_parser("bode", help="closed-loop frequency response at one "
                       "operating point")
    p.add_argument("--v", type=float, required=True, help="velocity, km/h")
    p.add_argument("--op-lambda", type=float, default=0.1,
                   help="operating-point slip")
    p.add_argument("--ts", type=float, required=True, help="sampling period, s")
    p.add_argument("--surface", default="dry_asphalt")
    p.add_argument("--points", type=int, default=200)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bode)

    p = sub.add_parser("simulate", help="run a scenario and write trace + report")
    p.add_argument("scenario", choices=("braking", "cruise", "acc-shared"))
    p.add_argument("--controller", default="multimode",
                   help='"multimode" or "fixed:<seconds>"')
    p.add_argument("--surface", default="dry_asphalt")
    p.add_argument("--v0", type=float, default=200.0, help="initial speed, km/h")
    p.add_argument("--profile", help="drive profile CSV (cruise/acc-shared); "
                   "shipped fixtures: city, highway")
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="run controller variants on one scenario")
    p.add_argument("--controller", action="append", default=[],
                   help="repeatable controller spec")
    p.add_argument("--surface", default="dry_asphalt")
    p.add_argument("--v0", type=float, default=200.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("reproduce", help="run a canned regression bundle")
    p.add_argument("bundle", choices=tuple(_BUNDLES) + ("all",))
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("make-profile", help="generate a seeded random drive profile")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration", type=float, default=300.0, help="s")
    p.add_argument("--surface", default="dry_asphalt")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_make_profile)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        if args.command == "simulate" and args.scenario in ("cruise", "acc-shared") \
                and not args.profile:
            raise ConfigError(f"simulate {args.scenario} requires --profile")
        cfg = _load_config(args)
        return args.func(args, cfg, ["mmctrl"] + argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NumericError, ConvergenceError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except InfeasibleSchedule as exc:
        print(f"infeasible scenario: {exc}", file=sys.stderr)
        return 4
    except SimulationBlowup as exc:
        print(f"simulation blowup: {exc}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
