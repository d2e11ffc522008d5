"""Built-in figure definitions over a directory of study CSVs.

The CSV stems follow the solver CLI's naming
(``<label>_<element>_k<degree>[_<subscales>]``); the shipped sample
data under ``flowplots/data`` uses exactly these names.
"""

from __future__ import annotations

from importlib.resources import files
from pathlib import Path

from .figspec import FigureSpec, SeriesSpec

PRESETS = ("fig1", "fig2", "fig3", "fig4", "fig5")

H1_LABEL = "$H^1$ velocity error"


def sample_data_dir() -> Path:
    """Directory of the committed sample CSVs."""
    return Path(str(files("flowplots").joinpath("data")))


def preset_figure(name: str, data_dir=None, out_dir=".",
                  fmt: str = "svg") -> FigureSpec:
    """FigureSpec for one named preset over ``data_dir`` CSVs."""
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {PRESETS}")
    data = Path(data_dir) if data_dir is not None else sample_data_dir()
    out = Path(out_dir) / f"{name}.{fmt}"

    def conv(stem, label):
        return SeriesSpec(path=data / f"{stem}.csv", label=label)

    if name == "fig1":
        return FigureSpec(
            output=out, kind="convergence", slopes=(2.0,),
            ylabel=H1_LABEL, title="Fixed-advection cavity, Pe = $10^2$",
            series=(conv("fig1_lagrange-th_k2", "Lagrange TH $k=2$"),))
    if name == "fig2":
        return FigureSpec(
            output=out, kind="convergence", slopes=(1.0, 2.0),
            ylabel=H1_LABEL, title="Fixed-advection cavity, Pe = $10^8$",
            series=(conv("fig2_lagrange-th_k2", "Lagrange TH $k=2$"),
                    conv("fig2_spline-th_k3", "spline TH $k=3$")))
    if name == "fig3":
        sweep = data / "fig3_lagrange-th_k2.csv"
        return FigureSpec(
            output=out, kind="robustness", xlabel="Pe", ylabel=H1_LABEL,
            title="Fixed 16x16 mesh across Pe",
            series=(SeriesSpec(path=sweep, label="stabilized", x="pe",
                               y="err_h1_u_stab"),
                    SeriesSpec(path=sweep, label="Galerkin", x="pe",
                               y="err_h1_u_galerkin")))
    if name == "fig4":
        return FigureSpec(
            output=out, kind="convergence", slopes=(2.0, 3.0),
            ylabel=H1_LABEL, title="Steady cavity, Re = 100",
            series=(conv("fig4_lagrange-th_k2", "Lagrange TH $k=2$"),
                    conv("fig4_spline-th_k3", "spline TH $k=3$")))
    return FigureSpec(
        output=out, kind="convergence", slopes=(2.0, 3.0),
        ylabel=H1_LABEL, title="Decaying vortex at $T=1$, Re = 100",
        series=(conv("fig5_lagrange-th_k2_dynamic", "$k=2$ dynamic"),
                conv("fig5_lagrange-th_k2_quasistatic",
                     "$k=2$ quasistatic"),
                conv("fig5_spline-th_k3_dynamic", "$k=3$ dynamic"),
                conv("fig5_spline-th_k3_quasistatic",
                     "$k=3$ quasistatic")))
