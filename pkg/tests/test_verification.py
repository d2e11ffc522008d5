"""Tests for benchmark fields, error reporting, and the study drivers."""

import csv

import numpy as np
import pytest

from vmsflow import _manufactured as mf
from vmsflow import verification as vf
from vmsflow.discretization import triangle_rule
from vmsflow.forms import FlowParameters
from vmsflow.oseen import OseenProblem, solve_oseen


def random_interior_points(n=200, seed=7, lo=0.05, hi=0.95):
    rng = np.random.default_rng(seed)
    return (lo + (hi - lo) * rng.random(n),
            lo + (hi - lo) * rng.random(n))


class TestManufacturedFields:
    def test_cavity_velocity_vanishes_on_fixed_walls(self):
        s = np.linspace(0.0, 1.0, 33)
        zero = np.zeros_like(s)
        for u1, u2 in (mf.cavity_u(s, zero),        # bottom
                       mf.cavity_u(zero, s),        # left
                       mf.cavity_u(zero + 1.0, s)): # right
            assert np.abs(u1).max() < 1e-13
            assert np.abs(u2).max() < 1e-13

    def test_cavity_lid_profile(self):
        s = np.linspace(0.0, 1.0, 33)
        u1, u2 = mf.cavity_u(s, np.ones_like(s))
        assert np.abs(u1 - 16 * s**2 * (1 - s) ** 2).max() < 1e-13
        assert np.abs(u2).max() < 1e-13
        # lid profile is tangential and vanishes at the corners
        assert abs(u1[0]) < 1e-13 and abs(u1[-1]) < 1e-13

    def test_cavity_pressure_center_value(self):
        assert mf.cavity_p(0.5, 0.5) == pytest.approx(1.0, abs=1e-14)

    def test_cavity_velocity_is_solenoidal(self):
        x, y = random_interior_points()
        g = mf.cavity_grad_u(x, y)
        assert np.abs(np.asarray(g[0][0]) + np.asarray(g[1][1])).max() < 1e-12

    def test_self_check_residuals_are_tiny(self):
        for kind in ("oseen", "ns"):
            ms = vf.regularized_cavity(5e-3, kind=kind)
            assert ms.self_check(50) < 1e-10

    def test_inconsistent_source_is_rejected(self):
        with pytest.raises(ValueError, match="inconsistent"):
            vf.ManufacturedSolution(
                name="broken", origin=(0.0, 0.0), extent=(1.0, 1.0),
                nu=5e-3, operator="oseen", unsteady=False,
                u=mf.cavity_u, grad_u=mf.cavity_grad_u,
                p=mf.cavity_p, grad_p=mf.cavity_grad_p,
                f=lambda x, y: (0.0 * x, 0.0 * x),
                visc_div=lambda x, y: mf.cavity_visc_div(x, y, 5e-3),
                advection=(1.0, 0.0))

    def test_unknown_operator_rejected(self):
        with pytest.raises(ValueError, match="operator"):
            vf.ManufacturedSolution(
                name="bad", origin=(0.0, 0.0), extent=(1.0, 1.0),
                nu=1.0, operator="stokes", unsteady=False,
                u=mf.cavity_u, grad_u=mf.cavity_grad_u, p=mf.cavity_p,
                grad_p=mf.cavity_grad_p, f=mf.cavity_u,
                visc_div=mf.cavity_u)

    def test_cavity_kind_validated(self):
        with pytest.raises(ValueError, match="kind"):
            vf.regularized_cavity(1e-2, kind="stokes")

    def test_taylor_green_momentum_closes_without_forcing(self):
        # the committed source term is identically zero ...
        x, y = random_interior_points()
        f1, f2 = mf.tg_f(x, y, 0.3, 0.01)
        assert np.all(np.asarray(f1) == 0) and np.all(np.asarray(f2) == 0)
        # ... and the construction-time operator check agrees
        ms = vf.taylor_green(0.01)
        assert ms.self_check(50) < 1e-10

    def test_taylor_green_energy_formula_matches_quadrature(self):
        nu, t = 0.01, 0.37
        xg, wg = np.polynomial.legendre.leggauss(40)
        x = np.pi * xg
        w = np.pi * wg
        u1, u2 = mf.tg_u(x[:, None], x[None, :], t, nu)
        energy = 0.5 * np.einsum("i,j,ij->", w, w, u1**2 + u2**2)
        assert energy == pytest.approx(mf.tg_kinetic_energy(t, nu), rel=1e-12)

    def test_exact_fields_shift_pressure_to_zero_mean(self):
        ms = vf.regularized_cavity(1e-2)
        xq = np.array([[[0.5, 0.5]]])
        fields = ms.exact_fields(xq)
        assert fields.p[0, 0] == pytest.approx(1.0 - 4 / np.pi**2)
        assert fields.u.shape == (1, 1, 2)
        assert fields.grad_u.shape == (1, 1, 2, 2)


class TestSymbolicCrossCheck:
    """Re-derive the sources from the stream function with sympy and
    compare numerically; independent of the committed generator."""

    def _stream_fields(self, sp):
        x, y = sp.symbols("x y", real=True)
        psi = 8 * (x**4 - 2 * x**3 + x**2) * (y**4 - y**2)
        u = (sp.diff(psi, y), -sp.diff(psi, x))
        p = sp.sin(sp.pi * x) * sp.sin(sp.pi * y)
        return x, y, u, p

    def test_oseen_source(self):
        sp = pytest.importorskip("sympy")
        x, y, u, p = self._stream_fields(sp)
        nu, a1, a2 = sp.symbols("nu a1 a2", real=True)
        adv = (a1, a2)
        f = tuple(
            sum(adv[j] * sp.diff(u[i], (x, y)[j]) for j in range(2))
            - nu * (sp.diff(u[i], x, 2) + sp.diff(u[i], y, 2))
            + sp.diff(p, (x, y)[i])
            for i in range(2))
        fn = sp.lambdify((x, y, nu, a1, a2), f, "numpy")
        xs, ys = random_interior_points(50)
        ref = fn(xs, ys, 0.007, 0.6, -0.3)
        got = mf.cavity_f_oseen(xs, ys, 0.007, 0.6, -0.3)
        for r, g in zip(ref, got):
            assert np.abs(np.asarray(r) - np.asarray(g)).max() < 1e-11

    def test_ns_source(self):
        sp = pytest.importorskip("sympy")
        x, y, u, p = self._stream_fields(sp)
        nu = sp.symbols("nu", real=True)
        f = tuple(
            sum(u[j] * sp.diff(u[i], (x, y)[j]) for j in range(2))
            - nu * (sp.diff(u[i], x, 2) + sp.diff(u[i], y, 2))
            + sp.diff(p, (x, y)[i])
            for i in range(2))
        fn = sp.lambdify((x, y, nu), f, "numpy")
        xs, ys = random_interior_points(50)
        ref = fn(xs, ys, 0.02)
        got = mf.cavity_f_ns(xs, ys, 0.02)
        for r, g in zip(ref, got):
            assert np.abs(np.asarray(r) - np.asarray(g)).max() < 1e-11

    def test_decaying_vortex_is_an_exact_unforced_solution(self):
        sp = pytest.importorskip("sympy")
        x, y, t, nu = sp.symbols("x y t nu", real=True)
        u = (sp.exp(-2 * nu * t) * sp.sin(x) * sp.cos(y),
             -sp.exp(-2 * nu * t) * sp.cos(x) * sp.sin(y))
        p = sp.Rational(1, 4) * (sp.cos(2 * x) + sp.cos(2 * y)) \
            * sp.exp(-4 * nu * t)
        for i in range(2):
            res = (sp.diff(u[i], t)
                   + u[0] * sp.diff(u[i], x) + u[1] * sp.diff(u[i], y)
                   - nu * (sp.diff(u[i], x, 2) + sp.diff(u[i], y, 2))
                   + sp.diff(p, (x, y)[i]))
            assert sp.simplify(res) == 0
        assert sp.simplify(sp.diff(u[0], x) + sp.diff(u[1], y)) == 0
        # committed pressure matches this closure
        xs, ys = random_interior_points(30)
        fn = sp.lambdify((x, y, t, nu), p, "numpy")
        assert np.abs(fn(xs, ys, 0.5, 0.02)
                      - mf.tg_p(xs, ys, 0.5, 0.02)).max() < 1e-14


class TestScalings:
    def test_nu_from_pe_unit_advection(self):
        # default advection has unit magnitude
        assert np.hypot(*vf.DEFAULT_ADVECTION) == pytest.approx(1.0)
        assert vf.nu_from_pe(100.0) == pytest.approx(5e-3)

    def test_nu_from_pe_general(self):
        assert vf.nu_from_pe(10.0, advection=(3.0, 4.0), length=2.0) \
            == pytest.approx(0.5)

    def test_nu_from_re(self):
        assert vf.nu_from_re(100.0) == pytest.approx(0.01)
        assert vf.nu_from_re(50.0, u_ref=2.0, length=0.5) \
            == pytest.approx(0.02)

    def test_nonpositive_rejected(self):
        with pytest.raises(ValueError):
            vf.nu_from_pe(0.0)
        with pytest.raises(ValueError):
            vf.nu_from_re(-1.0)


class TestRateFitting:
    def test_fit_recovers_synthetic_order(self):
        hs = [1 / 8, 1 / 16, 1 / 32, 1 / 64]
        errs = [3.7 * h**2 for h in hs]
        assert vf.fit_rate(hs, errs) == pytest.approx(2.0, abs=1e-8)

    def test_fit_window_ignores_preasymptotic_row(self):
        hs = [1 / 4, 1 / 8, 1 / 16, 1 / 32]
        errs = [3.7 * h**2 for h in hs]
        errs[0] *= 10.0  # contaminate the coarsest mesh only
        assert vf.fit_rate(hs, errs) == pytest.approx(2.0, abs=1e-8)

    def test_fit_degenerate_inputs(self):
        assert np.isnan(vf.fit_rate([0.1], [1.0]))
        assert np.isnan(vf.fit_rate([0.1, 0.05], [1.0, 0.0]))

    def test_report_rows_carry_pairwise_rates(self):
        rep = vf.ConvergenceReport("synthetic", "lagrange-th", 2)
        for n in (8, 16, 32):
            h = 1.0 / n
            rep.append_row({"n": n, "h": h, "ndof": n * n,
                            "err_h1_u": 2.0 * h**2, "err_l2_p": h**2,
                            "err_triple": h**2, "wall_s": 0.0})
        assert np.isnan(rep.rows[0]["rate_h1_u"])
        assert rep.rows[1]["rate_h1_u"] == pytest.approx(2.0, abs=1e-12)
        assert rep.rates["h1_u"] == pytest.approx(2.0, abs=1e-8)

    def test_report_rejects_nonincreasing_refinement(self):
        rep = vf.ConvergenceReport("synthetic", "lagrange-th", 2)
        row = {"n": 8, "h": 0.125, "ndof": 64, "err_h1_u": 1.0,
               "err_l2_p": 1.0, "err_triple": 1.0, "wall_s": 0.0}
        rep.append_row(dict(row))
        with pytest.raises(ValueError, match="decreasing"):
            rep.append_row(dict(row))


class TestCsvOutput:
    def test_float_round_trip_and_line_endings(self, tmp_path):
        path = tmp_path / "rows.csv"
        rows = [{"n": 8, "h": 1 / 3, "ndof": 659,
                 "err_h1_u": np.pi * 1e-7, "err_l2_p": 2.0 / 3.0,
                 "err_triple": 1e-300, "rate_h1_u": float("nan"),
                 "wall_s": 0.25}]
        vf.write_rows_csv(path, vf.CSV_HEADER, rows)

        raw = path.read_bytes()
        assert b"\r" not in raw
        raw.decode("utf-8")

        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            assert reader.fieldnames == list(vf.CSV_HEADER)
            back = next(reader)
        # 17 significant digits round-trip doubles exactly
        assert float(back["h"]) == 1 / 3
        assert float(back["err_h1_u"]) == np.pi * 1e-7
        assert float(back["err_triple"]) == 1e-300
        assert np.isnan(float(back["rate_h1_u"]))

    def test_report_write_uses_shared_header(self, tmp_path):
        rep = vf.ConvergenceReport("synthetic", "lagrange-th", 2)
        rep.append_row({"n": 8, "h": 0.125, "ndof": 64, "err_h1_u": 1.0,
                        "err_l2_p": 1.0, "err_triple": 1.0, "wall_s": 0.0})
        path = tmp_path / "report.csv"
        rep.write_csv(path)
        header = path.read_text(encoding="utf-8").splitlines()[0]
        assert header == ",".join(vf.CSV_HEADER)


class TestComputeErrors:
    def test_quadrature_is_saturated_for_error_norms(self):
        # elevating the rule two degrees moves the norms by < 0.1%
        nu = 5e-3
        ms = vf.regularized_cavity(nu)
        space = vf.build_space("lagrange-th", 8, 2)
        params = FlowParameters(nu=nu, advection=ms.advection)
        sol = solve_oseen(OseenProblem(space=space, params=params,
                                       f=ms.f, dirichlet=ms.u))
        base = vf.compute_errors(space, sol.coefficients, ms, params)
        fine = vf.compute_errors(space, sol.coefficients, ms, params,
                                 rule=triangle_rule(8))
        for key in ("err_h1_u", "err_l2_p", "err_triple"):
            assert abs(base[key] - fine[key]) < 1e-3 * fine[key]

    def test_solution_in_the_space_is_reproduced(self):
        # quadratic velocity, linear zero-mean pressure: the stabilized
        # solve and the error measurement should both be exact
        nu = 0.05
        a = (0.4, -0.7)
        u = lambda x, y: (x**2 + 0.0 * y, -2.0 * x * y)
        grad_u = lambda x, y: ((2.0 * x, 0.0 * x), (-2.0 * y, -2.0 * x))
        f = lambda x, y: (2.0 * a[0] * x - 2.0 * nu + 1.0,
                          -2.0 * a[0] * y - 2.0 * a[1] * x + 1.0)
        ms = vf.ManufacturedSolution(
            name="quadratic", origin=(0.0, 0.0), extent=(1.0, 1.0),
            nu=nu, operator="oseen", unsteady=False,
            u=u, grad_u=grad_u,
            p=lambda x, y: x + y - 1.0,
            grad_p=lambda x, y: (1.0 + 0.0 * x, 1.0 + 0.0 * x),
            f=f, visc_div=lambda x, y: (2.0 * nu + 0.0 * x, 0.0 * x),
            advection=a)
        space = vf.build_space("lagrange-th", 4, 2)
        params = FlowParameters(nu=nu, advection=a)
        sol = solve_oseen(OseenProblem(space=space, params=params,
                                       f=ms.f, dirichlet=ms.u))
        errs = vf.compute_errors(space, sol.coefficients, ms, params)
        assert errs["err_h1_u"] < 1e-9
        assert errs["err_l2_p"] < 1e-9

    def test_build_space_validates_family(self):
        with pytest.raises(ValueError, match="family"):
            vf.build_space("p2p1", 4, 2)


class TestStudyDriver:
    def test_requires_three_ascending_meshes(self):
        with pytest.raises(ValueError, match="3 meshes"):
            vf.run_convergence_study("oseen-cavity", meshes=(8, 16))
        with pytest.raises(ValueError, match="coarsest first"):
            vf.run_convergence_study("oseen-cavity", meshes=(16, 8, 32))

    def test_unknown_benchmark_recorded_as_failure(self):
        rep = vf.run_convergence_study("lid-cavity", meshes=(4, 6, 8))
        assert rep.rows == []
        assert rep.failure is not None
        assert "ValueError" in rep.failure

    def test_partial_failure_keeps_solved_rows(self, monkeypatch):
        real = vf._solve_one_mesh

        def flaky(benchmark, family, k, n, *args, **kw):
            if n == 6:
                raise RuntimeError("boom")
            return real(benchmark, family, k, n, *args, **kw)

        monkeypatch.setattr(vf, "_solve_one_mesh", flaky)
        rep = vf.run_convergence_study("oseen-cavity", meshes=(4, 6, 8))
        assert len(rep.rows) == 1
        assert rep.rows[0]["n"] == 4
        assert rep.failure == "RuntimeError: boom"

    def test_parallel_rows_match_sequential(self):
        kw = dict(benchmark="oseen-cavity", meshes=(4, 6, 8), nu=5e-3)
        seq = vf.run_convergence_study(jobs=1, **kw)
        par = vf.run_convergence_study(jobs=2, **kw)
        assert seq.failure is None and par.failure is None
        for a, b in zip(seq.rows, par.rows):
            for key in ("n", "h", "ndof", "err_h1_u", "err_l2_p",
                        "err_triple"):
                assert a[key] == b[key]

    def test_study_row_shape(self):
        rep = vf.run_convergence_study("oseen-cavity", meshes=(4, 6, 8))
        assert rep.failure is None
        assert [r["n"] for r in rep.rows] == [4, 6, 8]
        for row in rep.rows:
            assert set(vf.CSV_HEADER) <= set(row)
            assert row["err_h1_u"] > 0
        hs = [r["h"] for r in rep.rows]
        assert hs == sorted(hs, reverse=True)


class TestPeSweep:
    def test_sweep_rows_and_diffusive_agreement(self):
        rep = vf.run_pe_sweep(pe_values=(1.0, 1e2), n=8)
        assert [r["pe"] for r in rep.rows] == [1.0, 1e2]
        for row in rep.rows:
            assert set(vf.PeSweepReport.HEADER) <= set(row)
            assert row["galerkin_status"] == "ok"
            assert np.isfinite(row["err_h1_u_galerkin"])
        # at Pe=1 stabilization barely matters
        row = rep.rows[0]
        assert row["err_h1_u_stab"] == pytest.approx(
            row["err_h1_u_galerkin"], rel=0.05)

    def test_sweep_csv(self, tmp_path):
        rep = vf.run_pe_sweep(pe_values=(1.0, 1e2), n=4)
        path = tmp_path / "sweep.csv"
        rep.write_csv(path)
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == ",".join(vf.PeSweepReport.HEADER)
        assert len(lines) == 3
