"""Meshes, bases, and quadrature: exactness and bookkeeping checks."""

import numpy as np
import pytest

from vmsflow.discretization import (
    build_knot_mesh,
    build_spline_taylor_hood,
    build_taylor_hood,
    build_tri_mesh,
    bspline_ders,
    eval_basis,
    gauss_legendre_1d,
    greville_abscissae,
    open_knot_vector,
    quadrature_for,
    square_rule,
    triangle_rule,
)


def _ref_tri_moment(a, b):
    """Exact integral of x^a y^b over the unit reference triangle."""
    from math import factorial
    return factorial(a) * factorial(b) / factorial(a + b + 2)


class TestQuadrature:
    @pytest.mark.parametrize("degree", range(1, 13))
    def test_triangle_rule_integrates_monomials(self, degree):
        rule = triangle_rule(degree)
        assert rule.degree >= degree
        assert np.all(rule.weights > 0)
        np.testing.assert_allclose(rule.weights.sum(), 0.5, rtol=1e-14)
        for a in range(degree + 1):
            for b in range(degree + 1 - a):
                val = np.dot(rule.weights,
                             rule.points[:, 0] ** a * rule.points[:, 1] ** b)
                exact = _ref_tri_moment(a, b)
                assert abs(val - exact) <= 1e-13 * max(abs(exact), 1.0)

    def test_triangle_rule_degree_cap(self):
        with pytest.raises(ValueError):
            triangle_rule(13)

    @pytest.mark.parametrize("degree", range(1, 13))
    def test_square_rule_integrates_monomials(self, degree):
        rule = square_rule(degree)
        assert rule.degree >= degree
        np.testing.assert_allclose(rule.weights.sum(), 1.0, rtol=1e-14)
        for a in range(degree + 1):
            for b in range(degree + 1):
                val = np.dot(rule.weights,
                             rule.points[:, 0] ** a * rule.points[:, 1] ** b)
                exact = 1.0 / ((a + 1) * (b + 1))
                assert abs(val - exact) <= 1e-13 * abs(exact)

    def test_quartic_cross_moment_on_triangle(self):
        # int_T x^2 y^2 = 2!2!/6! = 1/180
        rule = triangle_rule(4)
        val = np.dot(rule.weights, rule.points[:, 0] ** 2 * rule.points[:, 1] ** 2)
        assert abs(val - 1.0 / 180.0) < 1e-15

    def test_gauss_legendre_unit_interval(self):
        x, w = gauss_legendre_1d(7)
        for a in range(8):
            assert abs(np.dot(w, x ** a) - 1.0 / (a + 1)) < 1e-14


class TestTriMesh:
    def test_counts_and_areas(self):
        mesh = build_tri_mesh(4)
        assert mesh.n_elements == 32
        assert mesh.vertices.shape == (25, 2)
        areas = mesh.cell_areas()
        assert np.all(areas > 0)
        np.testing.assert_allclose(areas.sum(), 1.0, rtol=1e-14)

    def test_rectangular_extent(self):
        mesh = build_tri_mesh(3, origin=(-np.pi, -np.pi),
                              extent=(2 * np.pi, 2 * np.pi))
        np.testing.assert_allclose(mesh.cell_areas().sum(), 4 * np.pi ** 2,
                                   rtol=1e-13)
        assert mesh.h == pytest.approx(2 * np.pi / 3)

    def test_boundary_edges_lie_on_their_side(self):
        mesh = build_tri_mesh(5, origin=(0.0, 0.0), extent=(1.0, 1.0))
        side_coord = {"left": (0, 0.0), "right": (0, 1.0),
                      "bottom": (1, 0.0), "top": (1, 1.0)}
        edge_verts = [(0, 1), (1, 2), (2, 0)]
        for side, pairs in mesh.boundary_edges.items():
            axis, value = side_coord[side]
            assert len(pairs) == 5
            for cell, loc in pairs:
                va, vb = edge_verts[loc]
                pa = mesh.vertices[mesh.cells[cell, va]]
                pb = mesh.vertices[mesh.cells[cell, vb]]
                assert abs(pa[axis] - value) < 1e-14
                assert abs(pb[axis] - value) < 1e-14

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            build_tri_mesh(0)
        with pytest.raises(ValueError):
            build_tri_mesh(2, extent=(1.0, -1.0))


class TestSpaceCounts:
    def test_two_triangle_quadratic_counts(self):
        space = build_taylor_hood(build_tri_mesh(1), 2)
        assert space.n_scalar_v == 9
        assert space.n_scalar_q == 4
        assert space.n_total == 2 * 9 + 2 * 4 + 2

    def test_pressure_dimension_on_16_grid(self):
        space = build_taylor_hood(build_tri_mesh(16), 2)
        assert space.n_scalar_q == 17 * 17

    def test_spline_counts(self):
        space = build_spline_taylor_hood(build_knot_mesh(8, 3), 3)
        # velocity: 8 spans, degree 3, double interior knots -> 4 + 2*7 = 18
        # pressure: degree 2, single knots -> 10 functions per direction
        assert space.n_scalar_v == 18 * 18
        assert space.n_scalar_q == 100

    def test_matched_continuity_of_spline_pair(self):
        # velocity C^{k-2} and pressure C^{k-2}: checked via the knot
        # multiplicities carried by the 1D factors
        space = build_spline_taylor_hood(build_knot_mesh(4, 3), 3)
        assert space.velocity._impl.bx.multiplicity == 2
        assert space.pressure._impl.bx.multiplicity == 1

    def test_quadratic_spline_pair_matches_classical_quads(self):
        # k=2 collapses to Q2/Q1: node counts equal the Lagrange quads
        n = 5
        space = build_spline_taylor_hood(build_knot_mesh(n, 2), 2)
        assert space.n_scalar_v == (2 * n + 1) ** 2
        assert space.n_scalar_q == (n + 1) ** 2

    def test_degree_guards(self):
        with pytest.raises(ValueError):
            build_taylor_hood(build_tri_mesh(2), 1)
        with pytest.raises(ValueError):
            build_spline_taylor_hood(build_knot_mesh(2, 3), 2)


def _reproduction_errors(space, rule, a, b):
    """Max value/grad/hess errors when interpolating x^a y^b."""
    f = lambda x, y: x ** a * y ** b
    u = space.interpolate(f)[space.connectivity]
    tab = space.tabulate(rule)
    x, y = tab.xq[..., 0], tab.xq[..., 1]

    def mono(da, db):
        ca = a - da
        cb = b - db
        if ca < 0 or cb < 0:
            return np.zeros_like(x)
        coef = np.prod(range(ca + 1, a + 1)) * np.prod(range(cb + 1, b + 1))
        return coef * x ** ca * y ** cb

    uh = np.einsum("eqi,ei->eq", tab.N, u)
    gh = np.einsum("eqid,ei->eqd", tab.grad, u)
    hh = np.einsum("eqicd,ei->eqcd", tab.hess, u)
    ev = np.abs(uh - mono(0, 0)).max()
    eg = max(np.abs(gh[..., 0] - mono(1, 0)).max(),
             np.abs(gh[..., 1] - mono(0, 1)).max())
    eh = max(np.abs(hh[..., 0, 0] - mono(2, 0)).max(),
             np.abs(hh[..., 0, 1] - mono(1, 1)).max(),
             np.abs(hh[..., 1, 1] - mono(0, 2)).max())
    return ev, eg, eh


class TestPolynomialReproduction:
    @pytest.mark.parametrize("k", [2, 3])
    def test_lagrange_space_reproduces_its_polynomials(self, k):
        space = build_taylor_hood(build_tri_mesh(3), k)
        rule = triangle_rule(2 * k)
        for a in range(k + 1):
            for b in range(k + 1 - a):
                ev, eg, eh = _reproduction_errors(space.velocity, rule, a, b)
                assert ev < 1e-12 and eg < 1e-10 and eh < 1e-9

    @pytest.mark.parametrize("k", [2, 3])
    def test_spline_space_reproduces_its_polynomials(self, k):
        space = build_spline_taylor_hood(build_knot_mesh(4, k), k)
        rule = square_rule(2 * k)
        # tensor space contains all x^a y^b with a, b <= k
        for a in range(k + 1):
            for b in range(k + 1):
                ev, eg, eh = _reproduction_errors(space.velocity, rule, a, b)
                assert ev < 1e-12 and eg < 1e-10 and eh < 1e-9

    def test_pressure_spaces_reproduce_their_polynomials(self):
        tri = build_taylor_hood(build_tri_mesh(3), 2)
        ev, eg, _ = _reproduction_errors(tri.pressure, triangle_rule(4), 1, 0)
        assert ev < 1e-12 and eg < 1e-11
        spl = build_spline_taylor_hood(build_knot_mesh(4, 3), 3)
        ev, eg, eh = _reproduction_errors(spl.pressure, square_rule(6), 2, 2)
        assert ev < 1e-12 and eg < 1e-10 and eh < 1e-9

    def test_partition_of_unity(self):
        tri = build_taylor_hood(build_tri_mesh(4), 2)
        spl = build_spline_taylor_hood(build_knot_mesh(4, 3), 3)
        for space in (tri.velocity, tri.pressure, spl.velocity, spl.pressure):
            tab = space.tabulate(quadrature_for(tri if space in (tri.velocity,
                                 tri.pressure) else spl))
            assert np.abs(tab.N.sum(axis=-1) - 1.0).max() < 1e-12
            assert np.abs(tab.grad.sum(axis=-2)).max() < 1e-9

    def test_quadrature_weights_cover_domain(self):
        spl = build_spline_taylor_hood(
            build_knot_mesh(3, 2, origin=(-np.pi, -np.pi),
                            extent=(2 * np.pi, 2 * np.pi)), 2)
        tab = spl.velocity.tabulate(quadrature_for(spl), need_hess=False)
        np.testing.assert_allclose(tab.w.sum(), 4 * np.pi ** 2, rtol=1e-13)


class TestBsplineBasics:
    def test_ders_match_finite_differences(self):
        breaks = np.linspace(0.0, 2.0, 6)
        knots = open_knot_vector(breaks, 3)
        eps = 1e-6
        for u in (0.13, 0.77, 1.395, 1.99):
            _, d0m = bspline_ders(knots, 3, u - eps, 0)
            _, d0p = bspline_ders(knots, 3, u + eps, 0)
            span, d = bspline_ders(knots, 3, u, 2)
            fd1 = (d0p[0] - d0m[0]) / (2 * eps)
            assert np.abs(fd1 - d[1]).max() < 1e-5
            _, d1m = bspline_ders(knots, 3, u - eps, 1)
            _, d1p = bspline_ders(knots, 3, u + eps, 1)
            fd2 = (d1p[1] - d1m[1]) / (2 * eps)
            assert np.abs(fd2 - d[2]).max() < 1e-4

    def test_greville_points_are_in_domain_and_monotone(self):
        knots = open_knot_vector(np.linspace(0.0, 1.0, 9), 3)
        g = greville_abscissae(knots, 3)
        assert g[0] == 0.0 and g[-1] == 1.0
        assert np.all(np.diff(g) > 0)

    def test_open_knot_vector_shape(self):
        knots = open_knot_vector(np.linspace(0, 1, 5), 2)
        assert len(knots) == 5 + 2 * 2
        assert np.all(knots[:3] == 0.0) and np.all(knots[-3:] == 1.0)


class TestBoundaryData:
    def test_lagrange_boundary_dofs_sit_on_sides(self):
        space = build_taylor_hood(build_tri_mesh(4), 2).velocity
        pts = space._impl.dof_points
        assert np.abs(pts[space.boundary_dofs["left"], 0]).max() < 1e-14
        assert np.abs(pts[space.boundary_dofs["right"], 0] - 1).max() < 1e-14
        assert np.abs(pts[space.boundary_dofs["bottom"], 1]).max() < 1e-14
        assert np.abs(pts[space.boundary_dofs["top"], 1] - 1).max() < 1e-14

    def test_lagrange_boundary_values_match_function(self):
        space = build_taylor_hood(build_tri_mesh(8), 2).velocity
        g = lambda x, y: 16 * x ** 2 * (1 - x) ** 2
        dofs, vals = space.boundary_values("top", g)
        pts = space._impl.dof_points[dofs]
        np.testing.assert_allclose(vals, g(pts[:, 0], pts[:, 1]), atol=1e-14)

    def test_spline_trace_reproduces_boundary_polynomial(self):
        space = build_spline_taylor_hood(build_knot_mesh(6, 3), 3).velocity
        g = lambda x, y: x ** 3 - 2 * x + 0.5
        dofs, vals = space.boundary_values("top", g)
        coeffs = np.zeros(space.n_dofs)
        coeffs[dofs] = vals
        # the trace at y=1 only involves the top row of control points, and
        # the top-row basis functions restricted to y=1 are the 1D basis
        n = 6
        impl = space._impl
        bx = impl.bx.tabulate_spans(np.array([0.2, 0.5, 0.9]), 0)[0]
        mult = impl.bx.multiplicity
        for sx in range(n):
            xs = impl.mesh.breaks_x[sx] + impl.hx * np.array([0.2, 0.5, 0.9])
            row = coeffs[space.boundary_dofs["top"]][mult * sx:mult * sx + 4]
            vals_x = bx[sx] @ row
            np.testing.assert_allclose(vals_x, g(xs, 1.0), atol=1e-12)

    def test_spline_corner_values_interpolate(self):
        # open knots make the corner coefficient equal the corner value
        space = build_spline_taylor_hood(build_knot_mesh(4, 2), 2).velocity
        g = lambda x, y: np.sin(x + 2 * y)
        dofs, vals = space.boundary_values("left", g)
        assert vals[0] == pytest.approx(g(0.0, 0.0), abs=1e-12)
        assert vals[-1] == pytest.approx(g(0.0, 1.0), abs=1e-12)


class TestMetricAndEval:
    def test_triangle_metric_tensors(self):
        h = 0.25
        space = build_taylor_hood(build_tri_mesh(4), 2).velocity
        tab = space.tabulate(triangle_rule(2), need_hess=False)
        lower = np.array([[1.0, -1.0], [-1.0, 2.0]]) * 4 / h ** 2
        upper = np.array([[2.0, -1.0], [-1.0, 1.0]]) * 4 / h ** 2
        np.testing.assert_allclose(tab.metric[0], lower, rtol=1e-13)
        np.testing.assert_allclose(tab.metric[1], upper, rtol=1e-13)
        G = tab.metric[0]
        assert np.trace(G) == pytest.approx(12 / h ** 2, rel=1e-13)
        assert np.einsum("ab,ab->", G, G) == pytest.approx(112 / h ** 4,
                                                           rel=1e-13)

    def test_square_metric_tensor(self):
        space = build_spline_taylor_hood(build_knot_mesh(8, 2), 2).velocity
        tab = space.tabulate(square_rule(2), need_hess=False)
        np.testing.assert_allclose(tab.metric[0], np.diag([256.0, 256.0]),
                                   rtol=1e-13)

    def test_eval_basis_matches_tabulate(self):
        mixed = build_taylor_hood(build_tri_mesh(3), 2)
        rule = quadrature_for(mixed)
        tab = mixed.velocity.tabulate(rule)
        for e in (0, 1, 7):
            be = eval_basis(mixed.velocity, e, rule)
            np.testing.assert_allclose(be.values, tab.N[e], atol=1e-14)
            np.testing.assert_allclose(be.grads, tab.grad[e], atol=1e-12)
            np.testing.assert_allclose(be.points, tab.xq[e], atol=1e-14)
            F = np.linalg.inv(be.inv_jacobian)
            np.testing.assert_allclose(4 * np.linalg.inv(F @ F.T), be.metric,
                                       rtol=1e-12)

    def test_eval_basis_range_check(self):
        mixed = build_taylor_hood(build_tri_mesh(2), 2)
        with pytest.raises(IndexError):
            eval_basis(mixed.velocity, 99, quadrature_for(mixed))

    def test_rule_cell_mismatch_rejected(self):
        tri = build_taylor_hood(build_tri_mesh(2), 2)
        with pytest.raises(ValueError):
            tri.velocity.tabulate(square_rule(4))

    def test_quadrature_for_degrees(self):
        tri = build_taylor_hood(build_tri_mesh(2), 2)
        assert quadrature_for(tri).degree >= 4
        assert quadrature_for(tri, "error").degree >= 6
        spl = build_spline_taylor_hood(build_knot_mesh(2, 3), 3)
        assert quadrature_for(spl).degree >= 6
        assert quadrature_for(spl, "error").degree >= 8


class TestMixedLayout:
    def test_offsets_partition_the_unknowns(self):
        space = build_taylor_hood(build_tri_mesh(2), 2)
        nv, nq = space.n_scalar_v, space.n_scalar_q
        assert space.off_uy == nv
        assert space.off_p == 2 * nv
        assert space.off_p2 == 2 * nv + nq
        assert space.off_mult == 2 * nv + 2 * nq
        assert space.n_total == 2 * nv + 2 * nq + 2

    def test_element_dofs_gather_map(self):
        space = build_taylor_hood(build_tri_mesh(2), 2)
        ed = space.element_dofs()
        nv_loc = space.velocity.n_loc
        nq_loc = space.pressure.n_loc
        assert ed.shape == (space.n_elements, 2 * nv_loc + 2 * nq_loc)
        np.testing.assert_array_equal(ed[:, :nv_loc],
                                      space.velocity.connectivity)
        np.testing.assert_array_equal(
            ed[:, nv_loc:2 * nv_loc] - space.off_uy,
            space.velocity.connectivity)
        np.testing.assert_array_equal(
            ed[:, 2 * nv_loc:2 * nv_loc + nq_loc] - space.off_p,
            space.pressure.connectivity)
        ed2 = space.element_dofs(include_p2=False)
        assert ed2.shape[1] == 2 * nv_loc + nq_loc
