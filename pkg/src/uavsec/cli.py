"""Command-line entry point: single runs and parameter sweeps.

`uavsec run` writes convergence.csv, trajectory.csv, metrics.csv and
summary.json into the output directory; `uavsec sweep` repeats that per
(axis value, seed, scheme) and collects sweep.csv. All numeric output uses
locale-independent formatting with 9 significant digits, files are written
atomically, and re-running with identical arguments reproduces the bytes.

Exit codes: 0 success, 1 usage or I/O failure, 2 infeasible scenario.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import metrics, orchestrate
from .channel import FadingDraws, realize_mission
from .scenario import ConfigError, ScenarioConfig, default_scenario, load_config, with_overrides

SWEEP_AXES = ("power_dbm", "sense_rate", "slots")


@dataclass(frozen=True)
class SweepSpec:
    """One sweep: an axis, its values, and the seeds to repeat each value."""

    axis: str
    values: tuple
    seeds: tuple = (0,)

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ValueError(f"unknown sweep axis {self.axis!r}; "
                             f"expected one of {SWEEP_AXES}")
        if not self.values:
            raise ValueError("sweep needs at least one value")
        if not self.seeds:
            raise ValueError("sweep needs at least one seed")

    @classmethod
    def parse(cls, spec: str, seeds) -> "SweepSpec":
        if "=" not in spec:
            raise ValueError(f"--sweep expects axis=v1,v2,..., got {spec!r}")
        axis, _, raw = spec.partition("=")
        values = tuple(float(v) for v in raw.split(",") if v.strip())
        return cls(axis.strip(), values, tuple(seeds))


def _fmt(x: float) -> str:
    return "%.9g" % x


def _write_atomic(path: str, text: str):
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_csv(path: str, header: list, rows: list):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) if isinstance(v, float) else str(v)
                              for v in row))
    _write_atomic(path, "\n".join(lines) + "\n")


def write_artifacts(out_dir: str, cfg: ScenarioConfig, state, rec,
                    scheme: str, dump_channels: bool = False):
    os.makedirs(out_dir, exist_ok=True)
    _write_csv(os.path.join(out_dir, "convergence.csv"),
               ["iteration", "r_sum", "delta", "feas_residual"],
               [(it, float(rec.r_sum[it]), float(rec.delta[it]),
                 float(rec.feas_residual[it]))
                for it in range(len(rec.r_sum))])
    _write_csv(os.path.join(out_dir, "trajectory.csv"),
               ["slot", "x", "y", "z"],
               [(s, float(state.trajectory.waypoints[s - 1, 0]),
                 float(state.trajectory.waypoints[s - 1, 1]),
                 float(state.trajectory.altitude))
                for s in range(1, cfg.slots + 1)])
    draws = FadingDraws.generate(cfg)
    channels = realize_mission(cfg, state.trajectory.waypoints,
                               state.trajectory.altitude, draws)
    mm = metrics.mission_metrics(channels, state.w, state.u, cfg)
    with np.errstate(divide="ignore"):
        rows = []
        for s, sm in enumerate(mm.per_slot, start=1):
            rows.append((s, 10.0 * math.log10(sm.snr_ud) if sm.snr_ud > 0 else -math.inf,
                         10.0 * math.log10(sm.snr_ut) if sm.snr_ut > 0 else -math.inf,
                         10.0 * math.log10(sm.snr_echo) if sm.snr_echo > 0 else -math.inf,
                         sm.secrecy))
    _write_csv(os.path.join(out_dir, "metrics.csv"),
               ["slot", "snr_ud_db", "snr_ut_db", "snr_echo_db", "secrecy"], rows)
    summary = {
        "r_sum": float(rec.final_r_sum),
        "iterations": rec.iterations,
        "status": rec.status,
        "converged": rec.converged,
        "scheme": scheme,
        "seed": cfg.rng_seed,
    }
    _write_atomic(os.path.join(out_dir, "summary.json"),
                  json.dumps(summary, sort_keys=True, indent=2) + "\n")
    if dump_channels:
        rows = []
        for s in range(1, cfg.slots + 1):
            ch = channels[s]
            for name, vec in (("h_ud", ch.h_ud), ("h_ut", ch.h_ut),
                              ("g_rt", ch.g_rt)):
                for k, v in enumerate(vec):
                    rows.append((s, name, k, float(v.real), float(v.imag)))
        _write_csv(os.path.join(out_dir, "channels.csv"),
                   ["slot", "link", "antenna", "re", "im"], rows)


def write_infeasible(out_dir: str, cfg: ScenarioConfig, scheme: str, message: str):
    os.makedirs(out_dir, exist_ok=True)
    summary = {
        "r_sum": 0.0,
        "iterations": 0,
        "status": "infeasible",
        "converged": False,
        "scheme": scheme,
        "seed": cfg.rng_seed,
        "detail": message,
    }
    _write_atomic(os.path.join(out_dir, "summary.json"),
                  json.dumps(summary, sort_keys=True, indent=2) + "\n")


def _load(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else default_scenario()
    over = {}
    if args.seed is not None:
        over["rng_seed"] = args.seed
    if args.max_iters is not None:
        over["max_outer_iters"] = args.max_iters
    return with_overrides(cfg, **over) if over else cfg


def cmd_run(args) -> int:
    try:
        cfg = _load(args)
    except (ConfigError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    try:
        state, rec = orchestrate.run(cfg, args.scheme)
    except orchestrate.InfeasibleDesignError as e:
        print(f"infeasible: sensing SNR constraint unreachable "
              f"({e.block}, slot {e.slot}): {e}", file=sys.stderr)
        try:
            write_infeasible(args.out_dir, cfg, args.scheme, str(e))
        except OSError as io_err:
            print(f"error: {io_err}", file=sys.stderr)
            return 1
        return 2
    try:
        write_artifacts(args.out_dir, cfg, state, rec, args.scheme,
                        args.dump_channels)
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    if not args.quiet:
        print(f"r_sum = {_fmt(rec.final_r_sum)} bits/s/Hz after "
              f"{rec.iterations} iterations ({rec.status}); artifacts in {args.out_dir}")
    return 0


def _apply_axis(cfg: ScenarioConfig, axis: str, value: float) -> ScenarioConfig:
    if axis == "power_dbm":
        return with_overrides(cfg, tx_power_dbm=value)
    if axis == "sense_rate":
        return with_overrides(cfg, sense_rate_min=value)
    if axis == "slots":
        slots = int(value)
        return with_overrides(cfg, slots=slots, horizon=slots * cfg.slot_len)
    raise ValueError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")


def _sweep_point(packed):
    """One (value, seed, scheme) run; returns a sweep.csv row."""
    cfg, axis, value, seed, scheme, out_dir, quiet = packed
    point_cfg = with_overrides(_apply_axis(cfg, axis, value), rng_seed=seed)
    point_dir = os.path.join(out_dir, f"{axis}_{_fmt(float(value))}",
                             f"seed_{seed}", scheme)
    try:
        state, rec = orchestrate.run(point_cfg, scheme)
        write_artifacts(point_dir, point_cfg, state, rec, scheme)
        r, status = float(rec.final_r_sum), rec.status
    except orchestrate.InfeasibleDesignError as e:
        # infeasible points are recorded at zero secrecy, not fatal
        write_infeasible(point_dir, point_cfg, scheme, str(e))
        r, status = 0.0, "infeasible"
    if not quiet:
        print(f"{axis}={_fmt(float(value))} seed={seed} {scheme}: "
              f"r_sum={_fmt(r)} ({status})")
    return (axis, float(value), seed, scheme, r, status)


def cmd_sweep(args) -> int:
    try:
        cfg = _load(args)
        spec = SweepSpec.parse(args.sweep,
                               args.seeds if args.seeds else [cfg.rng_seed])
    except (ConfigError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    schemes = [args.scheme] if args.scheme != "all" else list(orchestrate.SCHEMES)
    jobs = []
    for value in spec.values:
        for seed in spec.seeds:
            for scheme in schemes:
                jobs.append((cfg, spec.axis, value, seed, scheme, args.out_dir,
                             args.quiet))
    try:
        os.makedirs(args.out_dir, exist_ok=True)
        if args.jobs > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                rows = list(pool.map(_sweep_point, jobs))
        else:
            rows = [_sweep_point(j) for j in jobs]
        rows.sort(key=lambda r: (r[1], r[2], r[3]))
        _write_csv(os.path.join(args.out_dir, "sweep.csv"),
                   ["axis", "value", "seed", "scheme", "r_sum", "status"], rows)
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="uavsec",
                                 description="UAV ISAC secrecy-rate optimizer")
    sub = ap.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="optimize one scenario and write artifacts")
    sweep_p = sub.add_parser("sweep", help="run a parameter sweep")
    for p in (run_p, sweep_p):
        p.add_argument("--config", default=None, help="key=value config file")
        p.add_argument("--seed", type=int, default=None, help="override rng_seed")
        p.add_argument("--out-dir", default="out", help="output directory")
        p.add_argument("--max-iters", type=int, default=None,
                       help="override max_outer_iters")
        p.add_argument("--quiet", action="store_true")
    run_p.add_argument("--scheme", choices=orchestrate.SCHEMES, default="proposed")
    run_p.add_argument("--dump-channels", action="store_true",
                       help="also write per-slot channel entries")
    run_p.set_defaults(func=cmd_run)
    sweep_p.add_argument("--sweep", required=True,
                         help="axis=v1,v2,... with axis in %s" % (SWEEP_AXES,))
    sweep_p.add_argument("--seeds", type=lambda s: [int(v) for v in s.split(",")],
                         default=None, help="comma-separated seeds")
    sweep_p.add_argument("--scheme", choices=orchestrate.SCHEMES + ("all",),
                         default="all")
    sweep_p.add_argument("--jobs", type=int, default=1,
                         help="parallel sweep points")
    sweep_p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
