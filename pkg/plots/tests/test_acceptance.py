"""Acceptance gate for the figure package: the committed sample CSVs
regenerate every preset figure, and slope guides are geometrically
faithful."""

import xml.etree.ElementTree as ET

import numpy as np

from flowplots import cli
from flowplots.figspec import FigureSpec, SeriesSpec
from flowplots.presets import PRESETS
from flowplots.render import plot_figure, slope_guide

HEADER = "n,h,ndof,err_h1_u,err_l2_p,err_triple,rate_h1_u,wall_s\n"


def test_presets_regenerate_from_committed_samples(tmp_path):
    assert cli.main(["all", "--out", str(tmp_path)]) == 0
    for name in PRESETS:
        out = tmp_path / f"{name}.svg"
        assert out.stat().st_size > 0, name
        ET.parse(out)  # well-formed vector output


def test_synthetic_slope2_collinear_with_guide(tmp_path):
    hs = np.array([2.0 ** -k for k in range(2, 7)])
    errs = 0.6 * hs ** 2
    csv = tmp_path / "h2.csv"
    csv.write_text(HEADER + "".join(
        f"{round(1 / h)},{h},1,{e},0,0,nan,1\n"
        for h, e in zip(hs, errs)), encoding="utf-8")
    guide = slope_guide(hs, hs[-1], errs[-1], 2.0)
    np.testing.assert_allclose(guide, errs, rtol=1e-12)
    out = plot_figure(FigureSpec(output=tmp_path / "h2.svg", slopes=(2.0,),
                                 series=(SeriesSpec(csv, "h^2"),)))
    assert out.stat().st_size > 0
