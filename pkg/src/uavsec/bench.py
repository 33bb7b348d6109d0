"""Benchmark the solver kernel backends: `python -m uavsec.bench`.

Builds representative subproblems from the default scenario (a per-slot
beamforming QP and the joint trajectory program), solves each with the
numba-compiled kernel and the interpreted fallback, checks that the two
agree, and prints the timing ratio.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from . import cvxcore as cx
from . import orchestrate, trajopt, txbf
from ._accel import available_backends
from .channel import FadingDraws, realize_mission
from .scenario import default_scenario, with_overrides


def _cases():
    cfg = with_overrides(default_scenario(), slots=12, horizon=7.2)
    draws = FadingDraws.generate(cfg)
    state = orchestrate.initialize(cfg, draws)
    channels = realize_mission(cfg, state.trajectory.waypoints,
                               state.trajectory.altitude, draws)
    inp = txbf.make_tx_input(channels, state.w, state.u, cfg)
    beam = txbf.build_tx_subproblem(inp, 1, 2.0)
    beam_start = cx.stack_complex(state.w[0])
    beam_scales = np.full(beam.n, np.sqrt(cfg.tx_power_w))

    slacks = trajopt.build_slacks(state.trajectory, channels, state.w,
                                  state.u, cfg)
    traj, _, traj_start, traj_scales = trajopt.build_traj_subproblem(
        state.trajectory, slacks, cfg)
    return [
        ("beamforming QP (n=%d)" % beam.n, beam, beam_start, beam_scales, 50),
        ("trajectory program (n=%d)" % traj.n, traj, traj_start, traj_scales, 3),
    ]


def run_bench(repeats: int = 3) -> int:
    backends = available_backends()
    if "numba" not in backends:
        print("numba unavailable; nothing to compare")
        return 1
    print(f"{'case':32s} {'numba':>10s} {'numpy':>10s} {'speedup':>9s}")
    for name, problem, start, scales, inner_loops in _cases():
        times = {}
        objs = {}
        for backend in ("numba", "numpy"):
            opts = cx.SolveOptions(scales=scales, backend=backend)
            rep = cx.solve(problem, start, opts)  # warm-up / compile
            objs[backend] = rep.objective
            best = np.inf
            for _ in range(repeats):
                t0 = time.perf_counter()
                for _ in range(inner_loops):
                    cx.solve(problem, start, opts)
                best = min(best, (time.perf_counter() - t0) / inner_loops)
            times[backend] = best
        agree = abs(objs["numba"] - objs["numpy"]) <= 1e-9 * (1 + abs(objs["numba"]))
        print(f"{name:32s} {times['numba']*1e3:9.2f}ms {times['numpy']*1e3:9.2f}ms "
              f"{times['numpy']/times['numba']:8.1f}x"
              + ("" if agree else "  [MISMATCH]"))
        if not agree:
            return 1
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args(argv)
    return run_bench(args.repeats)


if __name__ == "__main__":
    raise SystemExit(main())
