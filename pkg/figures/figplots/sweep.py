"""Sweep curves: final secrecy rate versus the swept axis, per scheme.

    uavsec-fig-sweep --in sweep.csv --axis-label "number of slots S" \
        --out sweep.png

Seeds are aggregated to their mean with a min-max band (no band for a
single seed); infeasible points appear at zero secrecy.
"""

from __future__ import annotations

import argparse
import sys

import matplotlib.pyplot as plt
import numpy as np

from .io import SchemaError, read_columns
from . import style

REQUIRED = ("axis", "value", "seed", "scheme", "r_sum", "status")


def plot_sweep(csv_path: str, axis_label: str, out_path: str):
    cols = read_columns(csv_path, REQUIRED)
    style.apply()
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    schemes = sorted(set(cols["scheme"]),
                     key=lambda s: list(style.SCHEME_STYLE).index(s)
                     if s in style.SCHEME_STYLE else 99)
    for scheme in schemes:
        mask = cols["scheme"] == scheme
        values = np.unique(cols["value"][mask])
        mean = np.empty(values.size)
        lo = np.empty(values.size)
        hi = np.empty(values.size)
        for k, v in enumerate(values):
            r = cols["r_sum"][mask & (cols["value"] == v)]
            mean[k] = r.mean()
            lo[k] = r.min()
            hi[k] = r.max()
        kw = style.SCHEME_STYLE.get(scheme, dict(label=scheme, marker="o"))
        ax.plot(values, mean, ms=5, **kw)
        if np.any(hi > lo):
            ax.fill_between(values, lo, hi, alpha=0.15,
                            color=kw.get("color", None))
    ax.set_xlabel(axis_label)
    ax.set_ylabel("average secrecy rate [bits/s/Hz]")
    ax.legend()
    style.save(fig, out_path)
    return fig


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--in", dest="input", required=True, help="sweep.csv")
    ap.add_argument("--axis-label", default="swept value")
    ap.add_argument("--out", required=True, help="output image path")
    args = ap.parse_args(argv)
    try:
        plot_sweep(args.input, args.axis_label, args.out)
    except (SchemaError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
