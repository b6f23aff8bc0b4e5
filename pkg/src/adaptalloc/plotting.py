"""Trace reporting: delimited plot data and rendered figures.

Every view of a trace exists in two forms with identical content: a CSV
stream of plot-ready columns for external tools, and a matplotlib figure
rendered straight to a file. The four views are robot trajectories (traj),
specialization evolution (spec), per-task costs (cost), and the team
allocation mix against its target (pih).
"""

from __future__ import annotations

import csv

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
from matplotlib import patches

import numpy as np

from .world import COMPLETION_V, DEFAULT_BOUNDS, TraceRecord

PLOT_KINDS = ("traj", "spec", "cost", "pih")

_HEADERS = {
    "traj": ["k", "t", "robot", "x", "y"],
    "spec": ["k", "t", "robot", "task", "s"],
    "cost": ["k", "t", "robot", "task", "V"],
    "pih": ["k", "t", "task", "pi_h"],
}


def plot_rows(records: list[TraceRecord], what: str):
    """(header, rows) for one view; row counts follow the record schema."""
    if what not in PLOT_KINDS:
        raise ValueError(f"unknown plot kind {what!r} (choices: {PLOT_KINDS})")
    rows = []
    for r in records:
        n, m = r.s.shape
        if what == "traj":
            rows.extend(
                (r.k, r.t, i, float(r.x_act[i, 0]), float(r.x_act[i, 1]))
                for i in range(n)
            )
        elif what == "spec":
            rows.extend(
                (r.k, r.t, i, j, float(r.s[i, j]))
                for i in range(n)
                for j in range(m)
            )
        elif what == "cost":
            rows.extend(
                (r.k, r.t, i, j, float(r.v[i, j]))
                for i in range(n)
                for j in range(m)
            )
        else:
            rows.extend((r.k, r.t, j, float(r.pi_h[j])) for j in range(m))
    return _HEADERS[what], rows


def write_plot_csv(records: list[TraceRecord], what: str, sink) -> None:
    """Write one view as CSV. sink: path or text file object."""
    header, rows = plot_rows(records, what)
    own = not hasattr(sink, "write")
    f = open(sink, "w", newline="", encoding="utf-8") if own else sink
    try:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)
    finally:
        if own:
            f.close()


def _region_patch(d: dict):
    shape = d.get("shape")
    style = dict(facecolor="tab:red", alpha=0.15, edgecolor="tab:red", lw=1.0)
    if shape == "Disk":
        return patches.Circle(d["center"], d["radius"], **style)
    if shape == "Annulus":
        return patches.Wedge(
            d["center"], d["r_out"], 0.0, 360.0, width=d["r_out"] - d["r_in"], **style
        )
    if shape == "AnnularSector":
        return patches.Wedge(
            d["center"],
            d["r_out"],
            np.degrees(d["angle_from"]),
            np.degrees(d["angle_to"]),
            width=d["r_out"] - d["r_in"],
            **style,
        )
    if shape == "Rect":
        lo, hi = d["min"], d["max"]
        return patches.Rectangle(
            lo, hi[0] - lo[0], hi[1] - lo[1], **style
        )
    return None


def _pair_label(i: int, j: int) -> str:
    return f"robot {i} / task {j}"


def render_figure(records: list[TraceRecord], scenario: dict, what: str, out) -> None:
    """Render one view to an image file (format from the file extension)."""
    if what not in PLOT_KINDS:
        raise ValueError(f"unknown plot kind {what!r} (choices: {PLOT_KINDS})")
    ts = [r.t for r in records]
    n = records[0].s.shape[0] if records else 0
    m = records[0].s.shape[1] if records else 0
    fig, ax = plt.subplots(figsize=(7.5, 5.0))

    if what == "traj":
        for d in scenario.get("regions", []):
            patch = _region_patch(d)
            if patch is not None:
                ax.add_patch(patch)
        for i in range(n):
            xs = [r.x_act[i, 0] for r in records]
            ys = [r.x_act[i, 1] for r in records]
            (line,) = ax.plot(xs, ys, lw=1.5, label=f"robot {i}")
            ax.plot(xs[0], ys[0], "o", color=line.get_color(), ms=6)
        for t in scenario.get("tasks", []):
            gx, gy = t["goal"]
            ax.plot(gx, gy, "kx", ms=9, mew=2)
            ax.annotate(
                t.get("label") or f"task {t['id']}",
                (gx, gy),
                textcoords="offset points",
                xytext=(6, 6),
                fontsize=9,
            )
        lo, hi = DEFAULT_BOUNDS
        ax.set_xlim(lo[0] - 0.05, hi[0] + 0.05)
        ax.set_ylim(lo[1] - 0.05, hi[1] + 0.05)
        ax.set_aspect("equal")
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        ax.set_title("trajectories")
        if 0 < n <= 8:
            ax.legend(fontsize=8, loc="best")
    elif what in ("spec", "cost"):
        for i in range(n):
            for j in range(m):
                vals = [
                    (r.s[i, j] if what == "spec" else r.v[i, j]) for r in records
                ]
                ax.plot(ts, vals, lw=1.2, label=_pair_label(i, j))
        if what == "cost":
            ax.axhline(COMPLETION_V, color="gray", ls="--", lw=0.8)
        ax.set_xlabel("t [s]")
        ax.set_ylabel("specialization" if what == "spec" else "V [m^2]")
        ax.set_title(
            "specialization evolution" if what == "spec" else "task costs"
        )
        if 0 < n * m <= 12:
            ax.legend(fontsize=8, ncols=2, loc="best")
    else:
        pi_star = scenario.get("global", {}).get("pi_star")
        for j in range(m):
            vals = [r.pi_h[j] for r in records]
            (line,) = ax.plot(ts, vals, lw=1.5, label=f"task {j}")
            if pi_star is not None and j < len(pi_star):
                ax.axhline(
                    pi_star[j], color=line.get_color(), ls="--", lw=0.8, alpha=0.7
                )
        ax.set_xlabel("t [s]")
        ax.set_ylabel("team fraction")
        ax.set_title("allocation mix (dashed: target)")
        if m:
            ax.legend(fontsize=8, loc="best")

    fig.tight_layout()
    fig.savefig(out, dpi=130)
    plt.close(fig)
