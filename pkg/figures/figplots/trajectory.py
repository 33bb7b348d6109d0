"""Trajectory map: planar UAV path with mission and node markers.

    uavsec-fig-trajectory --in g5/trajectory.csv --in g10/trajectory.csv \
        --label "rate 5" --label "rate 10" \
        --iot 10,20 --ut 30,30 --out trajectory.png

Multiple inputs render side-by-side panels sharing the node markers.
"""

from __future__ import annotations

import argparse
import sys

import matplotlib.pyplot as plt
import numpy as np

from .io import SchemaError, read_columns
from . import style

REQUIRED = ("slot", "x", "y", "z")


def _parse_xy(text: str) -> np.ndarray:
    parts = [p for p in text.split(",") if p.strip()]
    if len(parts) != 2:
        raise SchemaError(f"expected 'x,y', got '{text}'")
    return np.array([float(p) for p in parts])


def plot_trajectory(csv_paths: list, iot_xy, ut_xy, out_path: str,
                    labels: list | None = None):
    if not csv_paths:
        raise SchemaError("need at least one trajectory.csv")
    if labels and len(labels) != len(csv_paths):
        raise SchemaError(f"{len(csv_paths)} inputs but {len(labels)} labels")
    iot_xy = np.asarray(iot_xy, float)
    ut_xy = np.asarray(ut_xy, float)
    style.apply()
    n = len(csv_paths)
    fig, axes = plt.subplots(1, n, figsize=(4.2 * n, 4.0), squeeze=False)
    for k, path in enumerate(csv_paths):
        ax = axes[0, k]
        cols = read_columns(path, REQUIRED)
        order = np.argsort(cols["slot"])
        x, y = cols["x"][order], cols["y"][order]
        ax.plot(x, y, "-", color="#1565c0", lw=1.5, label="UAV path")
        ax.plot(x[0], y[0], marker=">", color="#1565c0", ms=9, ls="none",
                label="start")
        ax.plot(x[-1], y[-1], marker="*", color="#1565c0", ms=12, ls="none",
                label="end")
        ax.scatter([iot_xy[0]], [iot_xy[1]], marker="D", c="#2e7d32", s=60,
                   zorder=5, label="IoT device")
        ax.scatter([ut_xy[0]], [ut_xy[1]], marker="X", c="#c62828", s=70,
                   zorder=5, label="untrusted target")
        ax.set_xlabel("x [m]")
        if k == 0:
            ax.set_ylabel("y [m]")
            ax.legend(loc="best")
        ax.set_aspect("equal", adjustable="datalim")
        if labels:
            ax.set_title(labels[k])
    style.save(fig, out_path)
    return fig


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--in", dest="inputs", action="append", required=True,
                    help="trajectory.csv (repeatable: one panel each)")
    ap.add_argument("--label", dest="labels", action="append", default=[])
    ap.add_argument("--iot", required=True, help="IoT device position 'x,y'")
    ap.add_argument("--ut", required=True, help="untrusted target position 'x,y'")
    ap.add_argument("--out", required=True, help="output image path")
    args = ap.parse_args(argv)
    try:
        plot_trajectory(args.inputs, _parse_xy(args.iot), _parse_xy(args.ut),
                        args.out, args.labels)
    except (SchemaError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
