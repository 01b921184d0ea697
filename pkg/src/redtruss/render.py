"""Deterministic SVG figures of truss designs and optimization traces."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .model import GroundStructure  # noqa: E402

# Members thinner than this fraction of the widest one are not drawn.
MIN_WIDTH_FRACTION = 1e-3
MAX_LINEWIDTH = 8.0  # pt

_RC = {
    "svg.hashsalt": "redtruss",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _save(fig, path: str | Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def visible_members(areas, damaged: Sequence[int] = ()) -> np.ndarray:
    """Indices of members that get drawn: wide enough and not removed."""
    areas = np.asarray(areas, dtype=float)
    top = float(areas.max(initial=0.0))
    keep = areas > MIN_WIDTH_FRACTION * top if top > 0 else np.zeros(areas.size, bool)
    keep[list(damaged)] = False
    return np.flatnonzero(keep)


def draw_design(gs: GroundStructure, areas, path: str | Path, damaged: Sequence[int] = (),
                title: str | None = None) -> int:
    """Draw members with line width proportional to area and the reference
    loads as arrows.  Returns the number of members drawn."""
    areas = np.asarray(areas, dtype=float)
    pos = {n.id: np.asarray(n.position) / 1000.0 for n in gs.nodes}  # m
    shown = visible_members(areas, damaged)
    top = float(areas.max(initial=0.0)) or 1.0
    xy = np.array(list(pos.values()))
    span = float(np.ptp(xy, axis=0).max()) or 1.0

    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        for i in shown:
            mem = gs.members[i]
            a, b = pos[mem.end_a], pos[mem.end_b]
            ax.plot([a[0], b[0]], [a[1], b[1]], color="0.15", solid_capstyle="round",
                    linewidth=MAX_LINEWIDTH * areas[i] / top, zorder=2)
        for n in gs.nodes:
            p = pos[n.id]
            fixed = n.fixed_x or n.fixed_y
            ax.plot(*p, marker="^" if fixed else "o", markersize=7 if fixed else 3,
                    color="tab:blue" if fixed else "0.3", zorder=3)
        loads = [(ld, "tab:red") for ld in gs.reference_loads] + [(ld, "tab:gray") for ld in gs.dead_loads]
        peak = max((np.hypot(ld.fx, ld.fy) for ld, _ in loads), default=1.0) or 1.0
        for ld, color in loads:
            vec = np.array([ld.fx, ld.fy]) / peak * 0.25 * span
            if not vec.any():
                continue
            tip = pos[ld.node]
            ax.annotate("", xy=tip, xytext=tip - vec, zorder=4,
                        arrowprops=dict(arrowstyle="-|>", color=color, lw=1.5))
        ax.set_aspect("equal")
        ax.margins(0.15)
        ax.set_xlabel("x (m)")
        ax.set_ylabel("y (m)")
        if title:
            ax.set_title(title)
        _save(fig, path)
    return int(shown.size)


def draw_trace(k, f, r, path: str | Path, title: str | None = None) -> None:
    """Objective and stencil radius against the iteration counter."""
    with plt.rc_context(_RC):
        fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6.0, 4.5), sharex=True)
        ax1.plot(k, -np.asarray(f, dtype=float), color="tab:red", lw=1.2)
        ax1.set_ylabel("worst-case load factor")
        ax2.semilogy(k, r, color="tab:blue", lw=1.2)
        ax2.set_ylabel("stencil radius (mm$^2$)")
        ax2.set_xlabel("iteration k")
        if title:
            ax1.set_title(title)
        fig.tight_layout()
        _save(fig, path)
