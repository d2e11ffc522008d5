"""Figure descriptions and CSV ingestion with column validation."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

KINDS = ("convergence", "robustness")


@dataclass(frozen=True)
class SeriesSpec:
    """One plotted curve: a CSV file plus the two columns to draw."""

    path: Path
    label: str
    x: str = "h"
    y: str = "err_h1_u"

    def __post_init__(self):
        object.__setattr__(self, "path", Path(self.path))


@dataclass(frozen=True)
class FigureSpec:
    """One output figure: series, reference slopes, labels, destination.

    ``slopes`` draws dashed h^s guides (convergence figures only).
    Relative series paths are the caller's responsibility; the JSON
    loader resolves them against the spec file's directory.
    """

    output: Path
    series: tuple = ()
    kind: str = "convergence"
    slopes: tuple = ()
    xlabel: str = "h"
    ylabel: str = "H1 velocity error"
    title: str = ""

    def __post_init__(self):
        object.__setattr__(self, "output", Path(self.output))
        object.__setattr__(self, "series", tuple(self.series))
        object.__setattr__(self, "slopes",
                           tuple(float(s) for s in self.slopes))
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, "
                             f"got {self.kind!r}")
        if not self.series:
            raise ValueError("a figure needs at least one series")
        suffix = self.output.suffix.lower()
        if suffix not in (".svg", ".pdf"):
            raise ValueError(f"vector output only (.svg or .pdf), "
                             f"got {self.output.name!r}")


def load_series(spec: SeriesSpec):
    """Numeric (x, y) arrays for one series.

    Raises ValueError naming the file (and the header line for column
    problems) so a bad CSV never produces a silent empty plot; rows
    whose y is not finite are dropped (failed reference solves are
    recorded as nan in the sweep schema).
    """
    try:
        with open(spec.path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames
            if header is None:
                raise ValueError(f"{spec.path}: empty file, nothing to plot")
            for col in (spec.x, spec.y):
                if col not in header:
                    raise ValueError(
                        f"{spec.path}, line 1: column {col!r} not in "
                        f"header {header}")
            rows = list(reader)
    except OSError as exc:
        raise ValueError(f"{spec.path}: {exc}") from exc
    if not rows:
        raise ValueError(f"{spec.path}: no data rows")

    def cell(row, col, line):
        text = row[col]
        if text is None or text.strip() == "":
            return float("nan")
        try:
            return float(text)
        except ValueError:
            raise ValueError(f"{spec.path}, line {line}: "
                             f"{col!r} value {text!r} is not numeric")

    x = np.array([cell(r, spec.x, i + 2) for i, r in enumerate(rows)])
    y = np.array([cell(r, spec.y, i + 2) for i, r in enumerate(rows)])
    keep = np.isfinite(y)
    if not keep.any():
        raise ValueError(f"{spec.path}: no finite {spec.y!r} values")
    return x[keep], y[keep]


def load_figure_spec(path) -> FigureSpec:
    """FigureSpec from a JSON file; relative paths resolve against the
    file's directory."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ValueError(f"{path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: expected a JSON object at top level")

    known = {"output", "series", "kind", "slopes", "xlabel", "ylabel",
             "title"}
    extra = set(raw) - known
    if extra:
        raise ValueError(f"{path}: unknown keys {sorted(extra)}")
    if "output" not in raw or "series" not in raw:
        raise ValueError(f"{path}: 'output' and 'series' are required")

    base = path.parent

    def resolve(p):
        p = Path(p)
        return p if p.is_absolute() else base / p

    try:
        series = tuple(
            SeriesSpec(path=resolve(entry["path"]),
                       label=entry.get("label", Path(entry["path"]).stem),
                       x=entry.get("x", "h"),
                       y=entry.get("y", "err_h1_u"))
            for entry in raw["series"])
    except (TypeError, KeyError) as exc:
        raise ValueError(f"{path}: each series needs a 'path' "
                         f"({exc})") from exc
    kwargs = {k: raw[k] for k in ("kind", "slopes", "xlabel", "ylabel",
                                  "title") if k in raw}
    return FigureSpec(output=resolve(raw["output"]), series=series,
                      **kwargs)
