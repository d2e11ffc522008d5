"""Benchmark acceptance gate.

One test per advertised guarantee: the five figure presets with their
rate bands and runtime budgets, the formulation property suite, and the
no-plotting-dependency check.  Each test reruns its study from scratch
through the library API (the same configurations the CLI presets
expand to), so this module is slow: about ten minutes on one core.
Deselect it with ``pytest --ignore=tests/test_acceptance.py`` during
development.
"""

import subprocess
import sys
import time

import numpy as np
import pytest

from vmsflow import cli
from vmsflow.forms import (
    FlowParameters,
    subscale_update_dynamic,
    tau_oseen,
    tau_smoothed,
)
from vmsflow.navier_stokes import (
    NSProblem,
    TimeStepConfig,
    kinetic_energy,
    run_unsteady,
    solve_ns_steady,
)
from vmsflow.oseen import (
    OseenProblem,
    discrete_divergence_residual,
    solve_oseen,
)
from vmsflow.verification import (
    build_space,
    nu_from_pe,
    regularized_cavity,
    run_convergence_study,
    run_pe_sweep,
    taylor_green,
)

ALL_SIDES = ("bottom", "right", "top", "left")


def run_preset_study(cfg):
    """Execute one preset study configuration; (report, wall seconds)."""
    start = time.perf_counter()
    report = run_convergence_study(
        cfg.benchmark, family=cfg.element, k=cfg.degree, meshes=cfg.meshes,
        nu=cfg.resolved_nu, c_inv=cfg.c_inv, subscale_model=cfg.subscales,
        dt_ratio=cfg.dt_ratio, t_end=cfg.t_end)
    return report, time.perf_counter() - start


def band_failures(configs):
    """Run each study and collect band violations; (messages, seconds)."""
    failures, total = [], 0.0
    for cfg in configs:
        report, wall = run_preset_study(cfg)
        total += wall
        if report.failure is not None:
            failures.append(f"{cfg.stem}: study aborted: {report.failure}")
            continue
        rate = report.rates["h1_u"]
        lo, hi = cfg.rate_band
        ok = np.isfinite(rate) and rate >= lo and (hi is None or rate <= hi)
        if not ok:
            bound = f"[{lo}, {hi}]" if hi is not None else f">= {lo}"
            errs = ", ".join(format(r["err_h1_u"], ".3e")
                             for r in report.rows)
            failures.append(f"{cfg.stem}: fitted H1 velocity rate "
                            f"{rate:.4f} outside {bound} (errors {errs})")
    return failures, total


class TestRateBands:
    def test_fixed_advection_cavity_moderate_peclet(self):
        failures, wall = band_failures(cli.preset_configs("fig1"))
        assert wall < 120.0, f"budget exceeded: {wall:.1f}s"
        assert not failures, "; ".join(failures)

    def test_fixed_advection_cavity_advection_dominated(self):
        failures, wall = band_failures(cli.preset_configs("fig2"))
        assert wall < 300.0, f"budget exceeded: {wall:.1f}s"
        assert not failures, "; ".join(failures)

    def test_steady_cavity_nonlinear(self):
        failures, wall = band_failures(cli.preset_configs("fig4"))
        assert wall < 600.0, f"budget exceeded: {wall:.1f}s"
        assert not failures, "; ".join(failures)

    def test_decaying_vortex_both_closures(self):
        failures, wall = band_failures(cli.preset_configs("fig5"))
        assert wall < 900.0, f"budget exceeded: {wall:.1f}s"
        assert not failures, "; ".join(failures)


class TestRobustness:
    def test_sweep_plateau_and_unstabilized_blowup(self):
        (cfg,) = cli.preset_configs("fig3")
        start = time.perf_counter()
        report = run_pe_sweep(pe_values=cfg.pe_values, family=cfg.element,
                              k=cfg.degree, n=cfg.sweep_n, c_inv=cfg.c_inv)
        wall = time.perf_counter() - start
        assert wall < 60.0, f"budget exceeded: {wall:.1f}s"
        msgs = cli._sweep_check_messages(report)
        assert not msgs, "; ".join(msgs)


class TestProperties:
    def test_solved_states_are_discretely_divergence_free(self):
        worst = []
        ms = regularized_cavity(nu_from_pe(1e2), kind="oseen")
        for family, k in (("lagrange-th", 2), ("spline-th", 3)):
            space = build_space(family, 8, k)
            params = FlowParameters(nu=ms.nu, advection=ms.advection)
            sol = solve_oseen(OseenProblem(space=space, params=params,
                                           f=ms.f, dirichlet=ms.u))
            worst.append(discrete_divergence_residual(space,
                                                      sol.coefficients))
        msn = regularized_cavity(0.01, kind="ns")
        space = build_space("lagrange-th", 8, 2)
        sol, _ = solve_ns_steady(NSProblem(
            space=space, params=FlowParameters(nu=0.01), f=msn.f,
            bcs={s: msn.u for s in ALL_SIDES}))
        worst.append(discrete_divergence_residual(space, sol.coefficients))
        tg = taylor_green(0.01)
        space = build_space("lagrange-th", 8, 2, origin=tg.origin,
                            extent=tg.extent)
        problem = NSProblem(space=space, params=FlowParameters(nu=0.01),
                            bcs={s: "free-slip" for s in ALL_SIDES},
                            u0=lambda x, y: tg.u(x, y, 0.0))
        _, _, rows = run_unsteady(problem,
                                  TimeStepConfig(dt=0.05, t_end=0.25))
        worst.extend(r["div_residual"] for r in rows)
        assert max(worst) <= 1e-10, worst

    def test_in_space_data_is_reproduced_exactly(self):
        # quadratic flow on the quadratic space, cubic on the cubic one
        a1, a2 = 0.8, -0.35
        nu = 0.1
        cases = []
        space = build_space("lagrange-th", 3, 2)
        cases.append((space,
                      lambda x, y: (x ** 2, -2.0 * x * y),
                      lambda x, y: x + y - 1.0,
                      lambda x, y: (2 * a1 * x - 2 * nu + 1.0,
                                    -2 * a1 * y - 2 * a2 * x + 1.0)))
        space = build_space("spline-th", 3, 3)
        cases.append((space,
                      lambda x, y: (x ** 3, -3.0 * x ** 2 * y),
                      lambda x, y: x ** 2 + y ** 2 - 2.0 / 3.0,
                      lambda x, y: (3 * a1 * x ** 2 - 6 * nu * x + 2 * x,
                                    -6 * a1 * x * y - 3 * a2 * x ** 2
                                    + 6 * nu * y + 2 * y)))
        for space, u, p, f in cases:
            params = FlowParameters(nu=nu, advection=(a1, a2))
            sol = solve_oseen(OseenProblem(space=space, params=params,
                                           f=f, dirichlet=u))
            u_ref = np.stack([
                space.velocity.interpolate(lambda x, y: u(x, y)[0]),
                space.velocity.interpolate(lambda x, y: u(x, y)[1])])
            p_ref = space.pressure.interpolate(p)
            assert np.abs(sol.u - u_ref).max() <= 1e-9
            assert np.abs(sol.p - p_ref).max() <= 1e-9

    def test_stabilization_coefficient_branches(self):
        h = 1.0 / 16.0
        adv = tau_oseen(FlowParameters(nu=1e-8, advection=(1.0, 0.0)), h)
        assert adv.tau_m == pytest.approx(h / 2, rel=1e-14)
        assert adv.tau_c == pytest.approx(h, rel=1e-14)
        diff = tau_oseen(FlowParameters(nu=1.0, advection=(1.0, 0.0)), h)
        assert diff.tau_m == pytest.approx(h * h / 36, rel=1e-14)
        assert diff.tau_c == pytest.approx(1.0, rel=1e-14)
        G = np.diag([4 / h ** 2, 4 / h ** 2])
        visc = tau_smoothed(np.zeros(2), G, FlowParameters(nu=0.02))
        assert visc.tau_m == pytest.approx(
            h * h / (36 * 0.02 * np.sqrt(32)), rel=1e-14)
        assert visc.tau_c == pytest.approx(
            1.0 / (visc.tau_m * 8 / h ** 2), rel=1e-14)
        step = tau_smoothed(np.zeros(2), G, FlowParameters(nu=0.0), dt=0.1)
        assert step.tau_m == pytest.approx(0.05, rel=1e-14)

    def test_fine_scale_update_matches_uncondensed_oracle(self):
        rng = np.random.default_rng(31)
        for _ in range(5):
            gu = 0.3 * rng.standard_normal((2, 2))
            s_prev = rng.standard_normal(2)
            r_mid = rng.standard_normal(2)
            gp2 = rng.standard_normal(2)
            tau_m, dt = 0.13, 0.02
            s_n, _ = subscale_update_dynamic(np.array(tau_m), dt, gu,
                                             r_mid, gp2, s_prev)
            M = np.eye(2) / dt + 0.5 * (np.eye(2) / tau_m + gu)
            rhs = (-r_mid - gp2 + s_prev / dt
                   - 0.5 * (s_prev / tau_m + gu @ s_prev))
            assert np.abs(s_n - np.linalg.solve(M, rhs)).max() <= 1e-12

    def test_skew_advection_carries_no_energy(self):
        # the convective half and its assembled adjoint half must cancel
        # when the advection rows are dotted with the state itself
        import vmsflow.discretization as d
        import vmsflow.forms as fo
        for family, k in (("lagrange-th", 2), ("spline-th", 3)):
            space = build_space(family, 3, k)
            rule = d.quadrature_for(space)
            rng = np.random.default_rng(8)
            vec = np.zeros(space.n_total)
            nv2 = 2 * space.n_scalar_v
            vec[:nv2] = rng.standard_normal(nv2)
            tab_v, tab_q = fo.mixed_tabulations(space, rule)
            u_loc, p_loc, p2_loc = fo.local_coefficients(space, vec)
            u, gu, div_u, *_ = fo._fields(tab_v, tab_q, u_loc, p_loc,
                                          p2_loc)
            rows = fo._momentum_rows(tab_v.w, tab_v, 0.0, u, gu,
                                     np.zeros_like(u),
                                     np.zeros(u.shape[:2]), div_u, 0.0,
                                     np.zeros_like(u))
            nloc = space.velocity.n_loc
            energy = np.einsum("er,er->e", rows,
                               u_loc.reshape(-1, 2 * nloc))
            assert np.abs(energy).max() <= 1e-12, family

    def test_manufactured_operator_residuals(self):
        for ms in (regularized_cavity(0.005, kind="oseen"),
                   regularized_cavity(0.01, kind="ns"),
                   taylor_green(0.01)):
            assert ms.self_check(100) <= 1e-10, ms.name

    def test_vortex_energy_tracks_exact_decay(self):
        nu = 0.01
        tg = taylor_green(nu)
        space = build_space("lagrange-th", 32, 2, origin=tg.origin,
                            extent=tg.extent)
        problem = NSProblem(space=space, params=FlowParameters(nu=nu),
                            bcs={s: "free-slip" for s in ALL_SIDES},
                            u0=lambda x, y: tg.u(x, y, 0.0),
                            subscale_model="dynamic")
        h = space.velocity.mesh.h
        steps = max(1, round(1.0 / (0.25 * h)))
        state, _, _ = run_unsteady(
            problem, TimeStepConfig(dt=1.0 / steps, t_end=1.0))
        measured = kinetic_energy(space, state.coefficients)
        exact = np.pi ** 2 * np.exp(-4.0 * nu * 1.0)
        assert abs(measured - exact) <= 0.02 * exact, (measured, exact)

    def test_unforced_energy_is_nonincreasing(self):
        tg = taylor_green(0.02)
        space = build_space("lagrange-th", 8, 2, origin=tg.origin,
                            extent=tg.extent)
        problem = NSProblem(space=space, params=FlowParameters(nu=0.02),
                            bcs={s: "free-slip" for s in ALL_SIDES},
                            u0=lambda x, y: tg.u(x, y, 0.0),
                            subscale_model="dynamic")
        _, _, rows = run_unsteady(problem,
                                  TimeStepConfig(dt=0.05, t_end=0.5))
        energies = np.array([r["energy"] for r in rows])
        drops = np.diff(energies)
        assert np.all(drops <= 1e-12 * energies[0]), energies


BLOCKER_SCRIPT = """\
import importlib
import io
import os
import pkgutil
import sys
import tempfile


class Block:
    def find_spec(self, name, path=None, target=None):
        if name.split(".")[0] in ("matplotlib", "flowplots"):
            raise ImportError(f"{name} blocked: plotting must stay optional")
        return None


sys.meta_path.insert(0, Block())
import vmsflow

for info in pkgutil.iter_modules(vmsflow.__path__):
    importlib.import_module(f"vmsflow.{info.name}")

from vmsflow.verification import run_convergence_study

report = run_convergence_study("oseen-cavity", meshes=(2, 3, 4), nu=0.05)
assert report.failure is None, report.failure
report.write_csv(os.path.join(tempfile.mkdtemp(), "probe.csv"))
print("ok")
"""


class TestNoPlottingDependency:
    def test_solver_and_reports_run_with_plotting_blocked(self):
        proc = subprocess.run([sys.executable, "-c", BLOCKER_SCRIPT],
                              capture_output=True, text=True, timeout=300)
        assert proc.returncode == 0, proc.stderr
        assert proc.stdout.strip() == "ok"
