"""Benchmark figures rendered straight to image files (no display needed)."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

_GROUPS = {"tdft": "temporal DFT", "ttv": "temporal TV"}


def _save(fig: Figure, path) -> Path:
    FigureCanvasAgg(fig)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    return Path(path)


def plot_objective_traces(reports, path, delta_target: float | None = None) -> Path:
    """Relative excess objective ``(J - J_best) / J_best`` against wall time.

    One panel per regularizer; ``J_best`` is the lowest objective any solver
    in that panel reached. Markers sit at each solver's time-to-target.
    """
    groups = [g for g in _GROUPS if any(r.regularizer == g for r in reports)]
    groups += sorted({r.regularizer for r in reports} - set(groups))
    fig = Figure(figsize=(5.5 * len(groups), 4))
    axes = fig.subplots(1, len(groups), squeeze=False)[0]
    for ax, g in zip(axes, groups):
        members = [r for r in reports if r.regularizer == g]
        best = min(min(r.trace.objective) for r in members)
        for r in members:
            t = np.asarray(r.trace.elapsed_ms)
            gap = (np.asarray(r.trace.objective) - best) / best
            keep = gap > 0
            (line,) = ax.plot(t[keep], gap[keep], label=r.label, lw=1.2)
            if r.reached:
                k = r.trace.iterations.index(r.iters_to_target)
                if keep[k]:
                    ax.plot([t[k]], [gap[k]], "o", color=line.get_color(), ms=4)
        ax.set_yscale("log")
        ax.set_xlabel("time (ms)")
        ax.set_ylabel("(J - J_best) / J_best")
        title = _GROUPS.get(g, g)
        if delta_target is not None:
            title += f" (markers: delta < {delta_target:g})"
        ax.set_title(title)
        ax.legend(frameon=False, fontsize=8)
        ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_time_to_target(reports, path) -> Path:
    """Bar chart of time-to-target; hatched bars never reached it."""
    fig = Figure(figsize=(1.2 * len(reports) + 2, 4))
    ax = fig.subplots()
    labels = [r.label for r in reports]
    bars = ax.bar(range(len(reports)), [r.time_to_target_ms for r in reports],
                  color=["C0" if r.regularizer == "tdft" else "C1" for r in reports])
    for bar, r in zip(bars, reports):
        if not r.reached:
            bar.set_hatch("//")
        ax.annotate(str(r.iters_to_target), (bar.get_x() + bar.get_width() / 2, bar.get_height()),
                    ha="center", va="bottom", fontsize=8)
    ax.set_xticks(range(len(reports)))
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_ylabel("time to target (ms)")
    ax.set_title("time to convergence target (labels: iterations)")
    return _save(fig, path)
