"""Figure generation for vmsflow study CSVs.

Reads the study CSV schema (header ``n,h,ndof,err_h1_u,err_l2_p,
err_triple,rate_h1_u,wall_s`` for convergence studies, ``pe,nu,
err_h1_u_stab,err_h1_u_galerkin,galerkin_status,wall_s`` for sweeps)
and renders deterministic vector figures.  The solver package is not a
dependency; CSV files are the only interface.
"""

from .figspec import FigureSpec, SeriesSpec, load_figure_spec, load_series
from .render import plot_figure, slope_guide

__all__ = [
    "FigureSpec",
    "SeriesSpec",
    "load_figure_spec",
    "load_series",
    "plot_figure",
    "slope_guide",
]

__version__ = "0.1.0"
