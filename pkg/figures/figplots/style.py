"""Shared figure style: fixed fonts and colors so re-runs are reproducible."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

SCHEME_STYLE = {
    "proposed": dict(color="#c62828", marker="o", label="proposed"),
    "opt-bf-fixed-traj": dict(color="#1565c0", marker="s",
                              label="beamforming only (fixed trajectory)"),
    "mrt-fixed-traj": dict(color="#2e7d32", marker="^",
                           label="MRT (fixed trajectory)"),
}

LINE_COLORS = ["#c62828", "#1565c0", "#2e7d32", "#6a1b9a", "#ef6c00"]


def apply():
    plt.rcParams.update({
        "figure.dpi": 120,
        "savefig.dpi": 120,
        "font.size": 10,
        "axes.grid": True,
        "grid.alpha": 0.3,
        "grid.linestyle": ":",
        "legend.fontsize": 9,
    })


def save(fig, out_path: str):
    fig.savefig(out_path, bbox_inches="tight", metadata={"Software": "figplots"})
    plt.close(fig)
