"""Benchmark exact solutions, error norms, convergence studies, and
rate-fitting reports."""

from __future__ import annotations

import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _manufactured as _mf
from .discretization import (
    MixedSpace,
    build_knot_mesh,
    build_spline_taylor_hood,
    build_taylor_hood,
    build_tri_mesh,
    quadrature_for,
)
from .forms import ExactFields, FlowParameters, error_norms_batch
from .navier_stokes import NSProblem, TimeStepConfig, run_unsteady, solve_ns_steady
from .oseen import OseenProblem, solve_oseen

__all__ = [
    "ManufacturedSolution",
    "ConvergenceReport",
    "PeSweepReport",
    "regularized_cavity",
    "taylor_green",
    "nu_from_pe",
    "nu_from_re",
    "compute_errors",
    "fit_rate",
    "build_space",
    "run_convergence_study",
    "run_pe_sweep",
    "CSV_HEADER",
]

CSV_HEADER = ("n", "h", "ndof", "err_h1_u", "err_l2_p", "err_triple",
              "rate_h1_u", "wall_s")
FAMILIES = ("lagrange-th", "spline-th")
DEFAULT_ADVECTION = (np.sqrt(3.0) / 2.0, 0.5)

# 6th-order central stencils for the runtime consistency check
_OFF = np.arange(-3, 4)
_D1 = np.array([-1.0, 9.0, -45.0, 0.0, 45.0, -9.0, 1.0]) / 60.0
_D2 = np.array([2.0, -27.0, 270.0, -490.0, 270.0, -27.0, 2.0]) / 180.0
_FD_H = 5e-3


def _pair(values, like):
    """Stack a component pair into (..., 2), broadcasting constants."""
    like = np.asarray(like, dtype=float)
    return np.stack([np.broadcast_to(np.asarray(c, dtype=float), like.shape)
                     for c in values], axis=-1)


@dataclass(frozen=True)
class ManufacturedSolution:
    """Exact flow field with a source term consistent with its operator.

    Field callables take (x, y) for steady solutions and (x, y, t) for
    unsteady ones; ``grad_u`` returns nested row pairs, ``visc_div`` is
    div(2 nu sym grad u).  Construction runs a finite-difference residual
    check of the momentum operator at ``check_points`` random points
    (plus a solenoidality check), so an inconsistent (u, p, f) triple
    cannot be instantiated silently.
    """

    name: str
    origin: tuple
    extent: tuple
    nu: float
    operator: str  # "oseen" | "ns"
    unsteady: bool
    u: object
    grad_u: object
    p: object
    grad_p: object
    f: object
    visc_div: object
    advection: tuple | None = None
    p_mean: float = 0.0
    exact_kinetic_energy: object = None
    check_points: int = 100
    check_tol: float = 1e-10

    def __post_init__(self):
        if self.operator not in ("oseen", "ns"):
            raise ValueError(f"unknown operator {self.operator!r}")
        if self.operator == "oseen" and self.advection is None:
            raise ValueError("oseen operator needs an advection field")
        resid = self.self_check(self.check_points)
        if resid > self.check_tol:
            raise ValueError(
                f"{self.name}: source term inconsistent with the fields "
                f"(max operator residual {resid:.3e})")

    # -- finite-difference consistency oracle ---------------------------

    def _sample_args(self, x, y, t):
        return (x, y) if not self.unsteady else (x, y, t)

    def _fd_scalar(self, fn, x, y, t, axis, order):
        h = _FD_H
        sten = _D1 if order == 1 else _D2
        acc = 0.0
        for c, o in zip(sten, _OFF):
            if axis == 0:
                acc = acc + c * np.asarray(
                    fn(*self._sample_args(x + o * h, y, t)), dtype=float)
            elif axis == 1:
                acc = acc + c * np.asarray(
                    fn(*self._sample_args(x, y + o * h, t)), dtype=float)
            else:
                acc = acc + c * np.asarray(fn(x, y, t + o * h), dtype=float)
        return acc / h ** order

    def self_check(self, n_points: int = 100, seed: int = 12345) -> float:
        """Max momentum-operator and solenoidality residual at random
        interior points (finite differences of u and p only)."""
        rng = np.random.default_rng(seed)
        margin = 4 * _FD_H
        x = self.origin[0] + margin + rng.random(n_points) * (
            self.extent[0] - 2 * margin)
        y = self.origin[1] + margin + rng.random(n_points) * (
            self.extent[1] - 2 * margin)
        t = rng.random(n_points) if self.unsteady else None

        args = self._sample_args(x, y, t)
        uval = _pair(self.u(*args), x)
        fval = _pair(self.f(*args), x)
        gp_fd = [self._fd_scalar(self.p, x, y, t, ax, 1) for ax in (0, 1)]

        worst = 0.0
        comp = [lambda *a: np.asarray(self.u(*a)[0], dtype=float),
                lambda *a: np.asarray(self.u(*a)[1], dtype=float)]
        du = [[self._fd_scalar(comp[i], x, y, t, ax, 1) for ax in (0, 1)]
              for i in range(2)]
        worst = max(worst, float(np.abs(du[0][0] + du[1][1]).max()))

        grads = self.grad_u(*args)
        for i in range(2):
            for ax in range(2):
                diff = du[i][ax] - np.broadcast_to(
                    np.asarray(grads[i][ax], dtype=float), x.shape)
                worst = max(worst, float(np.abs(diff).max()))

        gp = _pair(self.grad_p(*args), x)
        for ax in range(2):
            worst = max(worst, float(np.abs(gp_fd[ax] - gp[..., ax]).max()))

        a = self.advection if self.operator == "oseen" else None
        for i in range(2):
            lap = (self._fd_scalar(comp[i], x, y, t, 0, 2)
                   + self._fd_scalar(comp[i], x, y, t, 1, 2))
            if a is not None:
                conv = a[0] * du[i][0] + a[1] * du[i][1]
            else:
                conv = uval[..., 0] * du[i][0] + uval[..., 1] * du[i][1]
            res = conv - self.nu * lap + gp_fd[i] - fval[..., i]
            if self.unsteady:
                res = res + self._fd_scalar(comp[i], x, y, t, 2, 1)
            # scale by the term magnitudes: the finite differences are
            # round-off limited at ~eps/h^2, which the nu*lap term inflates
            scale = (1.0 + np.abs(conv) + self.nu * np.abs(lap)
                     + np.abs(gp_fd[i]) + np.abs(fval[..., i]))
            worst = max(worst, float((np.abs(res) / scale).max()))
        return worst

    # -- sampling for error norms ---------------------------------------

    def exact_fields(self, xq: np.ndarray, t: float | None = None) -> ExactFields:
        """Sample onto quadrature points xq (E, Q, 2); exact pressure is
        shifted to zero mean to match the solver's gauge."""
        x, y = xq[..., 0], xq[..., 1]
        args = self._sample_args(x, y, t)
        grads = self.grad_u(*args)
        grad_u = np.stack([_pair(row, x) for row in grads], axis=-2)
        return ExactFields(
            u=_pair(self.u(*args), x),
            grad_u=grad_u,
            p=np.broadcast_to(np.asarray(self.p(*args), dtype=float),
                              x.shape) - self.p_mean,
            grad_p=_pair(self.grad_p(*args), x),
            visc_div=_pair(self.visc_div(*args), x),
        )


def regularized_cavity(nu: float, kind: str = "oseen",
                       advection: tuple = DEFAULT_ADVECTION) -> ManufacturedSolution:
    """Regularized lid-driven cavity on the unit square: stream-function
    velocity with lid speed 16 x^2 (1-x)^2, pressure sin(pi x) sin(pi y).

    ``kind`` selects the operator the source term closes: "oseen" uses
    the constant advection field, "ns" uses u itself.
    """
    if kind not in ("oseen", "ns"):
        raise ValueError(f"kind must be 'oseen' or 'ns', got {kind!r}")
    if kind == "oseen":
        a1, a2 = float(advection[0]), float(advection[1])
        f = lambda x, y: _mf.cavity_f_oseen(x, y, nu, a1, a2)
        adv = (a1, a2)
    else:
        f = lambda x, y: _mf.cavity_f_ns(x, y, nu)
        adv = None
    return ManufacturedSolution(
        name=f"regularized-cavity-{kind}",
        origin=(0.0, 0.0), extent=(1.0, 1.0), nu=nu,
        operator=kind, unsteady=False,
        u=_mf.cavity_u, grad_u=_mf.cavity_grad_u,
        p=_mf.cavity_p, grad_p=_mf.cavity_grad_p,
        f=f, visc_div=lambda x, y: _mf.cavity_visc_div(x, y, nu),
        advection=adv, p_mean=_mf.CAVITY_P_MEAN)


def taylor_green(nu: float) -> ManufacturedSolution:
    """Decaying vortex on [-pi, pi]^2 with zero source term."""
    if nu <= 0:
        raise ValueError(f"nu must be > 0, got {nu}")
    return ManufacturedSolution(
        name="taylor-green",
        origin=(-np.pi, -np.pi), extent=(2 * np.pi, 2 * np.pi), nu=nu,
        operator="ns", unsteady=True,
        u=lambda x, y, t: _mf.tg_u(x, y, t, nu),
        grad_u=lambda x, y, t: _mf.tg_grad_u(x, y, t, nu),
        p=lambda x, y, t: _mf.tg_p(x, y, t, nu),
        grad_p=lambda x, y, t: _mf.tg_grad_p(x, y, t, nu),
        f=lambda x, y, t: _mf.tg_f(x, y, t, nu),
        visc_div=lambda x, y, t: _mf.tg_visc_div(x, y, t, nu),
        exact_kinetic_energy=lambda t: _mf.tg_kinetic_energy(t, nu))


def nu_from_pe(pe: float, advection: tuple = DEFAULT_ADVECTION,
               length: float = 1.0) -> float:
    """Viscosity for a target Peclet number Pe = |a| L / (2 nu)."""
    if pe <= 0:
        raise ValueError(f"Pe must be > 0, got {pe}")
    amag = float(np.hypot(*advection))
    return amag * length / (2.0 * pe)


def nu_from_re(re: float, u_ref: float = 1.0, length: float = 1.0) -> float:
    """Viscosity for a target Reynolds number Re = U L / nu."""
    if re <= 0:
        raise ValueError(f"Re must be > 0, got {re}")
    return u_ref * length / re


def build_space(family: str, n: int, k: int, origin=(0.0, 0.0),
                extent=(1.0, 1.0)) -> MixedSpace:
    if family == "lagrange-th":
        return build_taylor_hood(
            build_tri_mesh(n, origin=origin, extent=extent), k)
    if family == "spline-th":
        return build_spline_taylor_hood(
            build_knot_mesh(n, k, origin=origin, extent=extent), k)
    raise ValueError(f"element family must be one of {FAMILIES}, "
                     f"got {family!r}")


def compute_errors(space: MixedSpace, coefficients: np.ndarray,
                   exact: ManufacturedSolution, params: FlowParameters,
                   t: float | None = None, rule=None) -> dict:
    """Global error norms with the elevated-order quadrature."""
    if rule is None:
        rule = quadrature_for(space, "error")
    tab = space.velocity.tabulate(rule, need_hess=False)
    fields = exact.exact_fields(tab.xq, t=t)
    terms = error_norms_batch(space, rule, fields, coefficients, params)
    return {
        "err_h1_u": float(np.sqrt(terms["h1_semi_u"].sum())),
        "err_l2_u": float(np.sqrt(terms["l2_u"].sum())),
        "err_l2_p": float(np.sqrt(terms["l2_p"].sum())),
        "err_triple": float(np.sqrt(terms["stab"].sum())),
    }


def fit_rate(hs, errs, window: int = 3) -> float:
    """Least-squares slope of log(err) against log(h) over the finest
    ``window`` rows."""
    hs = np.asarray(hs, dtype=float)[-window:]
    errs = np.asarray(errs, dtype=float)[-window:]
    if len(hs) < 2 or np.any(errs <= 0):
        return float("nan")
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    return float(slope)


@dataclass
class ConvergenceReport:
    """Mesh-refinement study rows plus fitted rates.

    Rows carry the CSV_HEADER fields; ``rates`` holds least-squares rates
    over the finest 3 rows per error column; ``failure`` preserves the
    message of an aborted study (partial rows retained).
    """

    benchmark: str
    family: str
    degree: int
    params: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)
    failure: str | None = None

    def append_row(self, row: dict) -> None:
        if self.rows and row["h"] >= self.rows[-1]["h"]:
            raise ValueError("mesh sizes must be strictly decreasing")
        prev = self.rows[-1] if self.rows else None
        if prev is None:
            row["rate_h1_u"] = float("nan")
        else:
            row["rate_h1_u"] = float(
                np.log(prev["err_h1_u"] / row["err_h1_u"])
                / np.log(prev["h"] / row["h"]))
        self.rows.append(row)

    @property
    def rates(self) -> dict:
        hs = [r["h"] for r in self.rows]
        return {
            "h1_u": fit_rate(hs, [r["err_h1_u"] for r in self.rows]),
            "l2_p": fit_rate(hs, [r["err_l2_p"] for r in self.rows]),
            "triple": fit_rate(hs, [r["err_triple"] for r in self.rows]),
        }

    def write_csv(self, path) -> None:
        write_rows_csv(path, CSV_HEADER, self.rows)


@dataclass
class PeSweepReport:
    """Fixed-mesh robustness sweep: stabilized vs Galerkin error per Pe."""

    family: str
    degree: int
    n: int
    rows: list = field(default_factory=list)

    HEADER = ("pe", "nu", "err_h1_u_stab", "err_h1_u_galerkin",
              "galerkin_status", "wall_s")

    def write_csv(self, path) -> None:
        write_rows_csv(path, self.HEADER, self.rows)


def write_rows_csv(path, header, rows) -> None:
    """CSV with LF endings, UTF-8, 17 significant digits."""

    def fmt(v):
        if isinstance(v, float):
            return format(v, ".17g")
        return str(v)

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(row[k]) for k in header])


def _solve_oseen_case(ms, space, params, galerkin=False, dump_basename=None):
    problem = OseenProblem(
        space=space, params=params, f=ms.f,
        dirichlet=ms.u, variant="galerkin" if galerkin else "sharp")
    return solve_oseen(problem, dump_basename=dump_basename)


def _solve_one_mesh(benchmark, family, k, n, nu, c_inv, subscale_model,
                    dt_ratio, t_end, rel_tol, dump_basename=None):
    """Solve one mesh of a study; returns the report row (no rate)."""
    start = time.perf_counter()
    if benchmark == "oseen-cavity":
        ms = regularized_cavity(nu, kind="oseen")
        params = FlowParameters(nu=nu, advection=ms.advection, c_inv=c_inv)
        space = build_space(family, n, k)
        sol = _solve_oseen_case(ms, space, params,
                                dump_basename=dump_basename)
        errs = compute_errors(space, sol.coefficients, ms, params)
    elif benchmark == "ns-cavity":
        ms = regularized_cavity(nu, kind="ns")
        params = FlowParameters(nu=nu, c_inv=c_inv)
        space = build_space(family, n, k)
        bcs = {side: ms.u for side in ("bottom", "right", "top", "left")}
        sol, _ = solve_ns_steady(
            NSProblem(space=space, params=params, f=ms.f, bcs=bcs),
            rel_tol=rel_tol, dump_basename=dump_basename)
        errs = compute_errors(space, sol.coefficients, ms, params)
    elif benchmark == "taylor-green":
        ms = taylor_green(nu)
        params = FlowParameters(nu=nu, c_inv=c_inv)
        space = build_space(family, n, k, origin=ms.origin, extent=ms.extent)
        bcs = {side: "free-slip"
               for side in ("bottom", "right", "top", "left")}
        # the vortex decays with zero source, so f stays None
        problem = NSProblem(
            space=space, params=params, f=None,
            bcs=bcs, u0=lambda x, y: ms.u(x, y, 0.0),
            subscale_model=subscale_model)
        h = space.velocity.mesh.h
        steps = max(1, int(round(t_end / (dt_ratio * h))))
        config = TimeStepConfig(dt=t_end / steps, t_end=t_end,
                                rel_tol=rel_tol)
        state, _, _ = run_unsteady(problem, config)
        errs = compute_errors(space, state.coefficients, ms, params,
                              t=state.t)
    else:
        raise ValueError(f"unknown benchmark {benchmark!r}")
    wall = time.perf_counter() - start
    return {"n": n, "h": space.velocity.mesh.h, "ndof": space.n_total,
            **{k_: errs[k_] for k_ in
               ("err_h1_u", "err_l2_p", "err_triple")},
            "wall_s": wall}


def run_convergence_study(benchmark: str, family: str = "lagrange-th",
                          k: int = 2, meshes=(8, 16, 32, 64),
                          nu: float = 5e-3, c_inv: float = 36.0,
                          subscale_model: str = "quasistatic",
                          dt_ratio: float = 0.25, t_end: float = 1.0,
                          rel_tol: float = 1e-10, jobs: int = 1,
                          dump_basename: str | None = None) -> ConvergenceReport:
    """Refinement study over ``meshes``; any solve failure stops the study
    and the rows solved so far are kept with the failure message.

    ``dump_basename`` writes the assembled steady systems per mesh as
    Matrix Market files (time-dependent runs do not dump)."""
    meshes = list(meshes)
    if len(meshes) < 3:
        raise ValueError("a study needs at least 3 meshes")
    if sorted(meshes) != meshes:
        raise ValueError("meshes must be given coarsest first")
    report = ConvergenceReport(
        benchmark=benchmark, family=family, degree=k,
        params={"nu": nu, "c_inv": c_inv, "subscale_model": subscale_model,
                "dt_ratio": dt_ratio, "t_end": t_end, "jobs": jobs})

    def solve(n):
        dump = f"{dump_basename}_n{n}" if dump_basename else None
        return _solve_one_mesh(benchmark, family, k, n, nu, c_inv,
                               subscale_model, dt_ratio, t_end, rel_tol,
                               dump_basename=dump)

    outcomes = []
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(solve, n) for n in meshes]
            for fut in futures:
                try:
                    outcomes.append(fut.result())
                except Exception as exc:
                    outcomes.append(exc)
    else:
        for n in meshes:
            try:
                outcomes.append(solve(n))
            except Exception as exc:
                outcomes.append(exc)
                break
    for out in outcomes:
        if isinstance(out, Exception):
            report.failure = f"{type(out).__name__}: {out}"
            break
        report.append_row(out)
    return report


def run_pe_sweep(pe_values=(1e0, 1e2, 1e4, 1e6, 1e8, 1e10),
                 family: str = "lagrange-th", k: int = 2, n: int = 16,
                 c_inv: float = 36.0,
                 dump_basename: str | None = None) -> PeSweepReport:
    """Fixed-mesh Oseen cavity across Peclet numbers, solved with the
    stabilized form and with the plain Galerkin form; a Galerkin solve
    failure is recorded in its row instead of aborting the sweep."""
    report = PeSweepReport(family=family, degree=k, n=n)
    space = build_space(family, n, k)
    for pe in pe_values:
        start = time.perf_counter()
        nu = nu_from_pe(pe)
        dump = f"{dump_basename}_pe{pe:g}" if dump_basename else None
        ms = regularized_cavity(nu, kind="oseen")
        params = FlowParameters(nu=nu, advection=ms.advection, c_inv=c_inv)
        sol = _solve_oseen_case(ms, space, params, dump_basename=dump)
        err_stab = compute_errors(space, sol.coefficients, ms, params)

        status = "ok"
        err_gal = float("nan")
        try:
            gal = _solve_oseen_case(ms, space, params, galerkin=True,
                                    dump_basename=dump and f"{dump}_galerkin")
            err_gal = compute_errors(space, gal.coefficients, ms,
                                     params)["err_h1_u"]
        except (RuntimeError, ValueError) as exc:
            status = f"failed: {exc}"
        report.rows.append({
            "pe": pe, "nu": nu,
            "err_h1_u_stab": err_stab["err_h1_u"],
            "err_h1_u_galerkin": err_gal,
            "galerkin_status": status,
            "wall_s": time.perf_counter() - start,
        })
    return report
