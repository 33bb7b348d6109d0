"""Convergence curves: average secrecy rate versus outer iteration.

    uavsec-fig-convergence --in run1/convergence.csv --in run2/convergence.csv \
        --label "P = 30 dBm" --label "P = 33 dBm" --out convergence.png
"""

from __future__ import annotations

import argparse
import sys

import matplotlib.pyplot as plt

from .io import SchemaError, read_columns
from . import style

REQUIRED = ("iteration", "r_sum")


def plot_convergence(csv_paths: list, labels: list, out_path: str):
    if not csv_paths:
        raise SchemaError("need at least one convergence.csv")
    if labels and len(labels) != len(csv_paths):
        raise SchemaError(f"{len(csv_paths)} inputs but {len(labels)} labels")
    style.apply()
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    for k, path in enumerate(csv_paths):
        cols = read_columns(path, REQUIRED)
        label = labels[k] if labels else path
        color = style.LINE_COLORS[k % len(style.LINE_COLORS)]
        ax.plot(cols["iteration"], cols["r_sum"], marker="o", ms=3.5,
                color=color, label=label)
    ax.set_xlabel("outer iteration")
    ax.set_ylabel("average secrecy rate [bits/s/Hz]")
    ax.legend()
    style.save(fig, out_path)
    return fig


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--in", dest="inputs", action="append", required=True,
                    help="convergence.csv (repeatable)")
    ap.add_argument("--label", dest="labels", action="append", default=[])
    ap.add_argument("--out", required=True, help="output image path")
    args = ap.parse_args(argv)
    try:
        plot_convergence(args.inputs, args.labels, args.out)
    except (SchemaError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
