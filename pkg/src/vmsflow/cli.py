"""Command-line driver for benchmark studies, sweeps, and reports.

Each invocation runs one study (or a figure preset expanding to several),
writes one CSV per study plus a JSON manifest of parameters, versions,
and timings, and returns exit code 0 on success, 1 on solver or I/O
failure, 2 on usage errors or violated --assert-rates checks.
"""

from __future__ import annotations

import argparse
import json
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .verification import (
    FAMILIES,
    nu_from_pe,
    nu_from_re,
    run_convergence_study,
    run_pe_sweep,
)

__all__ = ["RunConfig", "Invocation", "parse_args", "preset_configs",
           "run", "main", "BENCHMARKS", "PRESETS"]

BENCHMARKS = ("oseen-cavity", "pe-sweep", "ns-cavity", "taylor-green")
PRESETS = ("fig1", "fig2", "fig3", "fig4", "fig5")
SUBSCALES = ("dynamic", "quasistatic")
DEFAULT_PE_VALUES = (1e0, 1e2, 1e4, 1e6, 1e8, 1e10)


@dataclass
class RunConfig:
    """One study: benchmark, discretization, physics, and output naming.

    Exactly one of nu/pe/re must be given for the single-physics
    benchmarks (pe for the fixed-advection cavity, re for the
    nonlinear ones); the sweep scans ``pe_values`` instead.
    """

    benchmark: str
    element: str = "lagrange-th"
    degree: int = 2
    meshes: tuple = (8, 16, 32, 64)
    nu: float | None = None
    pe: float | None = None
    re: float | None = None
    pe_values: tuple = DEFAULT_PE_VALUES
    sweep_n: int = 16
    dt_ratio: float = 0.25
    t_end: float = 1.0
    subscales: str = "quasistatic"
    c_inv: float = 36.0
    jobs: int = 1
    dump_matrices: bool = False
    rate_band: tuple | None = None
    assert_sweep: bool = False
    label: str = ""

    def __post_init__(self):
        if self.benchmark not in BENCHMARKS:
            raise ValueError(f"benchmark must be one of {BENCHMARKS}, "
                             f"got {self.benchmark!r}")
        if self.element not in FAMILIES:
            raise ValueError(f"element must be one of {FAMILIES}")
        if self.degree < 2:
            raise ValueError("velocity degree must be >= 2")
        if self.subscales not in SUBSCALES:
            raise ValueError(f"subscales must be one of {SUBSCALES}")
        given = [name for name, v in
                 (("nu", self.nu), ("pe", self.pe), ("re", self.re))
                 if v is not None]
        if self.benchmark == "pe-sweep":
            if given:
                raise ValueError("pe-sweep scans --pe-values; a single "
                                 "nu/pe/re is not applicable")
        else:
            allowed = (("nu", "pe") if self.benchmark == "oseen-cavity"
                       else ("nu", "re"))
            if len(given) != 1 or given[0] not in allowed:
                raise ValueError(
                    f"{self.benchmark} needs exactly one of {allowed}")
            if len(self.meshes) < 3:
                raise ValueError("a study needs at least 3 meshes")

    @property
    def resolved_nu(self) -> float | None:
        """Viscosity implied by whichever physics number was given.

        Conventions: Pe = |a| L / (2 nu) with |a| = 1, L = 1;
        Re = U L / nu with reference speed U = 1 (the lid maximum for
        the cavity) and L = 1, so nu = 1/Re.
        """
        if self.benchmark == "pe-sweep":
            return None
        if self.nu is not None:
            return self.nu
        if self.pe is not None:
            return nu_from_pe(self.pe)
        return nu_from_re(self.re)

    @property
    def stem(self) -> str:
        base = self.label or self.benchmark
        parts = [base, self.element, f"k{self.degree}"]
        if self.benchmark == "taylor-green":
            parts.append(self.subscales)
        return "_".join(parts)


@dataclass
class Invocation:
    """Parsed command line: target directory plus the studies to run."""

    out_dir: Path
    configs: list
    manifest_stem: str = "run"


def preset_configs(name: str) -> list:
    """Expand a figure preset into its study configurations."""
    if name == "fig1":
        return [RunConfig("oseen-cavity", pe=1e2, label="fig1",
                          rate_band=(1.8, 2.2))]
    if name == "fig2":
        return [RunConfig("oseen-cavity", pe=1e8, label="fig2",
                          rate_band=(0.7, 1.3)),
                RunConfig("oseen-cavity", pe=1e8, element="spline-th",
                          degree=3, label="fig2", rate_band=(1.7, 2.3))]
    if name == "fig3":
        return [RunConfig("pe-sweep", label="fig3", assert_sweep=True)]
    if name == "fig4":
        return [RunConfig("ns-cavity", re=100.0, label="fig4",
                          rate_band=(1.8, 2.2)),
                RunConfig("ns-cavity", re=100.0, element="spline-th",
                          degree=3, meshes=(8, 16, 32), label="fig4",
                          rate_band=(2.7, 3.3))]
    if name == "fig5":
        # spline time stepping is priced out of n=64; truncate its ladder
        configs = []
        for element, k, band, meshes in (
                ("lagrange-th", 2, (2.0, None), (8, 16, 32, 64)),
                ("spline-th", 3, (3.0, None), (8, 16, 32))):
            for model in SUBSCALES:
                configs.append(RunConfig(
                    "taylor-green", element=element, degree=k,
                    meshes=meshes, re=100.0, subscales=model,
                    label="fig5", rate_band=band))
        return configs
    raise ValueError(f"unknown preset {name!r}")


# -- argument parsing ----------------------------------------------------

def _int_list(text):
    try:
        return tuple(int(tok) for tok in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected comma-separated integers, got {text!r}")


def _float_list(text):
    try:
        return tuple(float(tok) for tok in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected comma-separated numbers, got {text!r}")


def _band(text):
    lo, sep, hi = text.partition(":")
    if not sep:
        raise argparse.ArgumentTypeError(
            f"expected LO:HI or LO: (one-sided), got {text!r}")
    try:
        return (float(lo), float(hi) if hi else None)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad rate band {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vmsflow",
        description="Convergence and robustness studies for the "
                    "stabilized incompressible-flow solver.")
    parser.add_argument("--preset", choices=PRESETS,
                        help="run a named figure preset instead of a "
                             "single subcommand")
    parser.add_argument("--out", type=Path, default=Path("results"),
                        help="output directory (default: results)")
    parser.add_argument("--jobs", type=int, default=1,
                        help="meshes solved concurrently per study")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--element", choices=FAMILIES,
                        default="lagrange-th")
    common.add_argument("-k", "--degree", type=int, default=2,
                        help="velocity degree (pressure is one lower)")
    common.add_argument("--c-inv", type=float, default=36.0,
                        help="inverse-inequality constant in the "
                             "stabilization parameters")
    common.add_argument("--label", default="",
                        help="output filename stem (default: benchmark)")
    common.add_argument("--dump-matrices", action="store_true",
                        help="write assembled steady systems in Matrix "
                             "Market format next to the CSV")

    conv = argparse.ArgumentParser(add_help=False, parents=[common])
    conv.add_argument("--meshes", type=_int_list, default=(8, 16, 32, 64),
                      help="comma-separated mesh sizes, coarsest first")
    conv.add_argument("--assert-rates", type=_band, default=None,
                      metavar="LO:HI", dest="assert_rates",
                      help="exit 2 unless the fitted H1 velocity rate "
                           "lies in the band (omit HI for a lower bound)")

    sub = parser.add_subparsers(dest="benchmark", metavar="BENCHMARK")

    po = sub.add_parser("oseen-cavity", parents=[conv],
                        help="fixed-advection regularized cavity study")
    g = po.add_mutually_exclusive_group(required=True)
    g.add_argument("--nu", type=float, help="viscosity")
    g.add_argument("--pe", type=float,
                   help="Peclet number Pe = |a| L / (2 nu), |a| = 1, L = 1")

    pn = sub.add_parser("ns-cavity", parents=[conv],
                        help="steady nonlinear regularized cavity study")
    g = pn.add_mutually_exclusive_group(required=True)
    g.add_argument("--nu", type=float, help="viscosity")
    g.add_argument("--re", type=float,
                   help="Reynolds number Re = U L / nu with lid speed "
                        "U = 1 and L = 1, so nu = 1/Re")

    pt = sub.add_parser("taylor-green", parents=[conv],
                        help="decaying-vortex time-accuracy study")
    g = pt.add_mutually_exclusive_group(required=True)
    g.add_argument("--nu", type=float, help="viscosity")
    g.add_argument("--re", type=float,
                   help="Reynolds number Re = U L / nu with reference "
                        "speed U = 1 and L = 1, so nu = 1/Re")
    pt.add_argument("--subscales", choices=SUBSCALES,
                    default="quasistatic")
    pt.add_argument("--dt-ratio", type=float, default=0.25,
                    help="time step as a fraction of h (dt = ratio * h)")
    pt.add_argument("--t-end", type=float, default=1.0)

    ps = sub.add_parser("pe-sweep", parents=[common],
                        help="fixed-mesh robustness sweep across Pe")
    ps.add_argument("--pe-values", type=_float_list,
                    default=DEFAULT_PE_VALUES,
                    help="comma-separated Peclet numbers")
    ps.add_argument("--n", type=int, default=16, dest="sweep_n",
                    help="fixed mesh size")
    ps.add_argument("--assert-rates", action="store_true",
                    dest="assert_rates",
                    help="exit 2 unless the stabilized plateau and "
                         "Galerkin growth checks hold")

    return parser


def parse_args(argv=None) -> Invocation:
    parser = build_parser()
    ns = parser.parse_args(argv)
    if ns.preset and ns.benchmark:
        parser.error("--preset replaces the subcommand; give one or "
                     "the other")
    if not ns.preset and not ns.benchmark:
        parser.error("a benchmark subcommand or --preset is required")

    if ns.preset:
        configs = preset_configs(ns.preset)
        for cfg in configs:
            cfg.jobs = ns.jobs
        return Invocation(out_dir=ns.out, configs=configs,
                          manifest_stem=ns.preset)

    kwargs = dict(
        benchmark=ns.benchmark, element=ns.element, degree=ns.degree,
        c_inv=ns.c_inv, jobs=ns.jobs, dump_matrices=ns.dump_matrices,
        label=ns.label)
    if ns.benchmark == "pe-sweep":
        kwargs.update(pe_values=ns.pe_values, sweep_n=ns.sweep_n,
                      assert_sweep=bool(ns.assert_rates))
    else:
        kwargs.update(meshes=ns.meshes, nu=ns.nu, rate_band=ns.assert_rates)
        if ns.benchmark == "oseen-cavity":
            kwargs.update(pe=ns.pe)
        else:
            kwargs.update(re=ns.re)
        if ns.benchmark == "taylor-green":
            kwargs.update(subscales=ns.subscales, dt_ratio=ns.dt_ratio,
                          t_end=ns.t_end)
    try:
        cfg = RunConfig(**kwargs)
    except ValueError as exc:
        parser.error(str(exc))
    return Invocation(out_dir=ns.out, configs=[cfg],
                      manifest_stem=cfg.stem)


# -- execution -----------------------------------------------------------

def _sweep_check_messages(report) -> list:
    """Plateau and Galerkin-growth checks on a sweep report."""
    msgs = []
    plateau = [r["err_h1_u_stab"] for r in report.rows
               if 1e4 <= r["pe"] <= 1e10]
    if len(plateau) < 2:
        msgs.append("plateau check needs at least two rows with "
                    "Pe in [1e4, 1e10]")
    elif max(plateau) >= 2.0 * min(plateau):
        msgs.append(f"stabilized error varies by "
                    f"{max(plateau) / min(plateau):.2f}x over "
                    f"Pe in [1e4, 1e10] (allowed < 2x)")
    by_pe = {r["pe"]: r for r in report.rows}
    low, high = by_pe.get(1e2), by_pe.get(1e8)
    if low is None or high is None:
        msgs.append("growth check needs Pe = 1e2 and 1e8 rows")
    elif low["galerkin_status"] != "ok":
        msgs.append(f"unstabilized reference at Pe=1e2 failed: "
                    f"{low['galerkin_status']}")
    elif high["galerkin_status"] == "ok":
        ratio = high["err_h1_u_galerkin"] / low["err_h1_u_galerkin"]
        if not ratio >= 10.0:
            msgs.append(f"unstabilized error grew only {ratio:.2f}x "
                        f"from Pe=1e2 to 1e8 (expected >= 10x)")
    # a failed unstabilized solve at Pe=1e8 already demonstrates the loss
    return msgs


def _run_one(cfg: RunConfig, out_dir: Path, entry: dict) -> tuple:
    """Execute one study; returns (failed, band_violated)."""
    dump = str(out_dir / f"{cfg.stem}_system") if cfg.dump_matrices else None
    csv_path = out_dir / f"{cfg.stem}.csv"
    entry["csv"] = csv_path.name

    if cfg.benchmark == "pe-sweep":
        report = run_pe_sweep(pe_values=cfg.pe_values, family=cfg.element,
                              k=cfg.degree, n=cfg.sweep_n, c_inv=cfg.c_inv,
                              dump_basename=dump)
        report.write_csv(csv_path)
        if cfg.assert_sweep:
            msgs = _sweep_check_messages(report)
            entry["checks"] = msgs
            for msg in msgs:
                print(f"vmsflow: check failed: {msg}", file=sys.stderr)
            return False, bool(msgs)
        return False, False

    report = run_convergence_study(
        cfg.benchmark, family=cfg.element, k=cfg.degree, meshes=cfg.meshes,
        nu=cfg.resolved_nu, c_inv=cfg.c_inv, subscale_model=cfg.subscales,
        dt_ratio=cfg.dt_ratio, t_end=cfg.t_end, jobs=cfg.jobs,
        dump_basename=dump)
    report.write_csv(csv_path)
    entry["rates"] = report.rates
    if report.failure is not None:
        entry["failure"] = report.failure
        print(f"vmsflow: {cfg.stem}: {report.failure}", file=sys.stderr)
        return True, False
    if cfg.rate_band is not None:
        lo, hi = cfg.rate_band
        rate = report.rates["h1_u"]
        ok = np.isfinite(rate) and rate >= lo and (hi is None or rate <= hi)
        if not ok:
            bound = f"[{lo}, {hi}]" if hi is not None else f">= {lo}"
            msg = f"fitted H1 velocity rate {rate:.4f} outside {bound}"
            entry["checks"] = [msg]
            print(f"vmsflow: {cfg.stem}: rate check failed: {msg}",
                  file=sys.stderr)
            return False, True
    return False, False


def run(invocation: Invocation) -> int:
    out_dir = invocation.out_dir
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"vmsflow: cannot create output directory: {exc}",
              file=sys.stderr)
        return 1

    failed = violated = False
    runs = []
    for cfg in invocation.configs:
        entry = {
            "benchmark": cfg.benchmark, "element": cfg.element,
            "degree": cfg.degree, "label": cfg.label or None,
            "c_inv": cfg.c_inv, "jobs": cfg.jobs,
            "nu_effective": cfg.resolved_nu,
            "given": {k: v for k, v in
                      (("nu", cfg.nu), ("pe", cfg.pe), ("re", cfg.re))
                      if v is not None},
        }
        if cfg.benchmark == "pe-sweep":
            entry.update(pe_values=list(cfg.pe_values), n=cfg.sweep_n)
        else:
            entry.update(meshes=list(cfg.meshes))
        if cfg.benchmark == "taylor-green":
            entry.update(subscales=cfg.subscales, dt_ratio=cfg.dt_ratio,
                         t_end=cfg.t_end)
        start = time.perf_counter()
        try:
            run_failed, run_violated = _run_one(cfg, out_dir, entry)
        except OSError as exc:
            print(f"vmsflow: I/O failure: {exc}", file=sys.stderr)
            return 1
        entry["wall_s"] = time.perf_counter() - start
        runs.append(entry)
        failed = failed or run_failed
        violated = violated or run_violated

    code = 1 if failed else (2 if violated else 0)
    manifest = {
        "preset": invocation.manifest_stem
        if invocation.manifest_stem in PRESETS else None,
        "versions": {
            "vmsflow": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "runs": runs,
        "exit_code": code,
    }
    try:
        path = out_dir / f"{invocation.manifest_stem}_manifest.json"
        path.write_text(json.dumps(manifest, indent=2) + "\n",
                        encoding="utf-8")
    except OSError as exc:
        print(f"vmsflow: I/O failure: {exc}", file=sys.stderr)
        return 1
    return code


def main(argv=None) -> int:
    return run(parse_args(argv))


if __name__ == "__main__":
    sys.exit(main())
