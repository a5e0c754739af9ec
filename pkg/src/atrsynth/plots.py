"""Figure rendering for synthesized trajectories and benchmark reports.

Everything draws through the Agg backend and writes PNG files; nothing here
opens a window. Trajectory figures show either per-agent time series (scalar
agents) or planar paths on two chosen coordinates, with box regions from the
scenario's predicate templates sketched underneath.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
from matplotlib.patches import Rectangle

from .system import Trajectory

_COLORS = ["tab:red", "tab:blue", "tab:green", "tab:orange", "tab:purple", "tab:brown"]


def _plot_coords(scenario) -> tuple[int, int] | None:
    """Which two coordinates to plot as a plane, or None for time series."""
    hint = (scenario.data.get("plot") or {}).get("coords")
    if hint is not None and len(hint) == 2:
        return int(hint[0]), int(hint[1])
    dims = scenario.system.state_dims
    if min(dims) >= 2:
        return 0, 1
    return None


def _region_boxes(scenario, cx: int, cy: int):
    """(label, x-interval, y-interval) for box templates on the plotted coords."""
    out = []
    for label, spec in (scenario.data.get("predicates") or {}).items():
        if not isinstance(spec, dict) or spec.get("template") != "box":
            continue
        coords = [int(c) for c in spec.get("coords", range(len(spec.get("lo", ()))))]
        if cx in coords and cy in coords:
            ix, iy = coords.index(cx), coords.index(cy)
            lo, hi = spec["lo"], spec["hi"]
            out.append((label, (lo[ix], hi[ix]), (lo[iy], hi[iy])))
    return out


def render_trajectory(scenario, traj: Trajectory, path: str | Path) -> Path:
    """Draw the synthesized trajectory and return the figure path."""
    path = Path(path)
    coords = _plot_coords(scenario)
    offs = traj.state_offsets
    n_agents = traj.n_agents

    if coords is None:
        fig, (ax, axu) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
        ks = range(traj.T + 1)
        for i in range(n_agents):
            for c in range(traj.state_dims[i]):
                vals = [traj.states[k, offs[i] + c] for k in ks]
                label = f"agent {i + 1}" + (f" [{c}]" if traj.state_dims[i] > 1 else "")
                ax.plot(ks, vals, marker="o", ms=3, color=_COLORS[i % len(_COLORS)], label=label)
        ax.set_ylabel("state")
        ax.legend(loc="best", fontsize=8)
        ax.grid(True, alpha=0.3)
        in_offs, acc = [], 0
        for d in traj.input_dims:
            in_offs.append(acc)
            acc += d
        for i in range(n_agents):
            for c in range(traj.input_dims[i]):
                axu.step(
                    range(traj.inputs.shape[0]),
                    traj.inputs[:, in_offs[i] + c],
                    where="post",
                    color=_COLORS[i % len(_COLORS)],
                    alpha=0.8,
                )
        axu.set_xlabel("k")
        axu.set_ylabel("input")
        axu.grid(True, alpha=0.3)
    else:
        cx, cy = coords
        fig, ax = plt.subplots(figsize=(6.5, 6))
        for label, (x0, x1), (y0, y1) in _region_boxes(scenario, cx, cy):
            ax.add_patch(
                Rectangle((x0, y0), x1 - x0, y1 - y0, facecolor="0.88", edgecolor="0.6")
            )
            ax.annotate(label, ((x0 + x1) / 2, (y0 + y1) / 2), ha="center", va="center",
                        fontsize=8, color="0.4")
        for i in range(n_agents):
            xs = [traj.states[k, offs[i] + cx] for k in range(traj.T + 1)]
            ys = [traj.states[k, offs[i] + cy] for k in range(traj.T + 1)]
            color = _COLORS[i % len(_COLORS)]
            ax.plot(xs, ys, marker="o", ms=3.5, color=color, label=f"agent {i + 1}")
            ax.plot(xs[0], ys[0], marker="s", ms=9, color=color, mfc="white")
            ax.annotate("start", (xs[0], ys[0]), fontsize=7, xytext=(4, 4),
                        textcoords="offset points")
        ax.set_xlabel(f"coordinate {cx}")
        ax.set_ylabel(f"coordinate {cy}")
        ax.legend(loc="best", fontsize=8)
        ax.grid(True, alpha=0.3)
        ax.set_aspect("equal", adjustable="datalim")

    fig.suptitle(scenario.name)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def render_bench(rows: list[dict], path: str | Path) -> Path:
    """Bar chart of counts and times per scenario, naive vs reduced."""
    path = Path(path)
    names = sorted({r["name"] for r in rows})
    by = {(r["name"], r["method"]): r for r in rows}

    fig, (axc, axt) = plt.subplots(1, 2, figsize=(11, 4.5))
    width = 0.38
    xs = range(len(names))
    for j, method in enumerate(("naive", "reduced")):
        sizes = [by.get((n, method), {}).get("size", 0) for n in names]
        times = [by.get((n, method), {}).get("total_s", 0.0) for n in names]
        offset = (j - 0.5) * width
        axc.bar([x + offset for x in xs], sizes, width, label=method)
        axt.bar([x + offset for x in xs], times, width, label=method)
    for ax, title in ((axc, "encoding size"), (axt, "wall time [s]")):
        ax.set_xticks(list(xs))
        ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
        ax.set_title(title)
        ax.legend(fontsize=8)
        ax.grid(True, axis="y", alpha=0.3)
    if any(by.get((n, m), {}).get("size", 0) > 0 for n in names for m in ("naive", "reduced")):
        axc.set_yscale("log")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path
