"""Matplotlib rendering of figure specs (Agg only, deterministic bytes)."""

from __future__ import annotations

from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  backend must be set first

from .figspec import FigureSpec, load_series  # noqa: E402

MARKERS = ("o", "s", "^", "d", "v", "p")

# strip the volatile fields so identical inputs give identical bytes
_DETERMINISM = {
    "svg.hashsalt": "flowplots",
    "figure.max_open_warning": 0,
}
_METADATA = {".svg": {"Date": None}, ".pdf": {"CreationDate": None}}


def slope_guide(x, anchor_x, anchor_y, slope):
    """Values of the c*x^slope line through (anchor_x, anchor_y)."""
    x = np.asarray(x, dtype=float)
    return anchor_y * (x / anchor_x) ** slope


def _draw_convergence(ax, spec: FigureSpec, loaded):
    for i, ((x, y), series) in enumerate(zip(loaded, spec.series)):
        ax.loglog(x, y, marker=MARKERS[i % len(MARKERS)],
                  label=series.label)
    x0, y0 = loaded[0]
    xs = np.array([min(x.min() for x, _ in loaded),
                   max(x.max() for x, _ in loaded)])
    # anchor guides at the finest point of the first series, fanned
    # apart so equal-slope data sits on (not under) its guide
    for j, slope in enumerate(spec.slopes):
        gy = slope_guide(xs, x0[-1], y0[-1] * 0.7 ** j, slope)
        ax.loglog(xs, gy, "k--", linewidth=0.8)
        ax.annotate(f"$h^{{{slope:g}}}$", (xs[-1], gy[-1]),
                    textcoords="offset points", xytext=(4, -4),
                    fontsize=9)


def _draw_robustness(ax, spec: FigureSpec, loaded):
    for i, ((x, y), series) in enumerate(zip(loaded, spec.series)):
        ax.loglog(x, y, marker=MARKERS[i % len(MARKERS)],
                  label=series.label)


def plot_figure(spec: FigureSpec) -> Path:
    """Render one spec to its vector output path; returns the path.

    All CSVs are read and validated before the file is touched, so a
    bad input never leaves an empty or truncated image behind.
    """
    loaded = [load_series(s) for s in spec.series]
    spec.output.parent.mkdir(parents=True, exist_ok=True)

    with matplotlib.rc_context(_DETERMINISM):
        fig, ax = plt.subplots(figsize=(4.8, 3.6))
        try:
            if spec.kind == "convergence":
                _draw_convergence(ax, spec, loaded)
            else:
                _draw_robustness(ax, spec, loaded)
            ax.set_xlabel(spec.xlabel)
            ax.set_ylabel(spec.ylabel)
            if spec.title:
                ax.set_title(spec.title)
            ax.grid(True, which="both", linewidth=0.3, alpha=0.5)
            ax.legend(fontsize=9)
            fig.tight_layout()
            fig.savefig(spec.output,
                        metadata=_METADATA[spec.output.suffix.lower()])
        finally:
            plt.close(fig)
    return spec.output
