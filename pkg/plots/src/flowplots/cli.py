"""``flowplot <preset|spec.json>``: render figures from study CSVs."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .figspec import load_figure_spec
from .presets import PRESETS, preset_figure
from .render import plot_figure


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowplot",
        description="Render convergence and robustness figures from "
                    "study CSVs (inputs are never modified).")
    parser.add_argument("target",
                        help=f"a preset ({', '.join(PRESETS)}, or 'all') "
                             "or a path to a figure-spec JSON file")
    parser.add_argument("--data", type=Path, default=None,
                        help="directory of study CSVs (default: the "
                             "shipped sample data; ignored for JSON "
                             "specs, whose paths are self-contained)")
    parser.add_argument("--out", type=Path, default=Path("figures"),
                        help="output directory for preset figures "
                             "(default: figures)")
    parser.add_argument("--format", choices=("svg", "pdf"), default="svg",
                        help="vector format for preset figures")
    return parser


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    if ns.target in PRESETS or ns.target == "all":
        names = PRESETS if ns.target == "all" else (ns.target,)
        specs = [preset_figure(n, data_dir=ns.data, out_dir=ns.out,
                               fmt=ns.format) for n in names]
    elif ns.target.endswith(".json"):
        try:
            specs = [load_figure_spec(ns.target)]
        except ValueError as exc:
            print(f"flowplot: {exc}", file=sys.stderr)
            return 1
    else:
        print(f"flowplot: {ns.target!r} is neither a preset "
              f"({', '.join(PRESETS)}, all) nor a .json spec file",
              file=sys.stderr)
        return 2

    for spec in specs:
        try:
            path = plot_figure(spec)
        except (ValueError, OSError) as exc:
            print(f"flowplot: {exc}", file=sys.stderr)
            return 1
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
