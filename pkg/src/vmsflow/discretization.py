"""Meshes, function spaces, and quadrature on rectangular domains.

Two discretizations of the same velocity/pressure pairing are provided:

* ``StructuredTriMesh`` + Lagrange spaces: an n-by-n grid of square cells,
  each split into two right triangles along the lower-left to upper-right
  diagonal, carrying continuous P_k velocity and P_{k-1} pressure.
* ``TensorKnotMesh`` + B-spline spaces: open uniform knot vectors with
  maximal-continuity interiors, carrying degree-k velocity components and
  degree-(k-1) pressure on the same knot spans.

Both families expose the same tabulation interface (values, physical
gradients, physical second derivatives, quadrature geometry, and the
element metric tensor G), so the weak-form kernels are family-agnostic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._tri_quadrature import rule_for_degree as _tri_rule_for_degree

SIDES = ("left", "right", "bottom", "top")


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureRule:
    """Points/weights on a reference cell, exact to ``degree``.

    ``cell`` is "triangle" (unit right triangle, measure 1/2) or "square"
    (unit square, measure 1).  Weights sum to the reference measure.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int
    cell: str


def gauss_legendre_1d(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points/weights on [0, 1], exact to ``degree``."""
    n = max(1, (degree + 2) // 2)
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def triangle_rule(degree: int) -> QuadratureRule:
    """Symmetric rule on the unit reference triangle."""
    points, weights, actual = _tri_rule_for_degree(degree)
    return QuadratureRule(points=points, weights=weights, degree=actual,
                          cell="triangle")


def square_rule(degree: int) -> QuadratureRule:
    """Tensor Gauss-Legendre rule on the unit square."""
    x, wx = gauss_legendre_1d(degree)
    n = len(x)
    # point ordering: y-major, matching the tensor basis tabulation
    X, Y = np.meshgrid(x, x, indexing="xy")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    w = np.outer(wx, wx).ravel()
    exact = 2 * n - 1
    return QuadratureRule(points=pts, weights=w, degree=exact, cell="square")


# ---------------------------------------------------------------------------
# Meshes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StructuredTriMesh:
    """Uniform triangulation of a rectangle: n x n cells, two triangles each.

    Every cell is split along the same lower-left to upper-right diagonal;
    cell 2*s is the lower-right triangle, cell 2*s+1 the upper-left one
    (s = j*n + i enumerates grid cells x-fastest).  Triangles are
    counterclockwise.
    """

    n_per_side: int
    origin: np.ndarray
    extent: np.ndarray
    vertices: np.ndarray
    cells: np.ndarray
    boundary_edges: dict
    h: float

    @property
    def n_elements(self) -> int:
        return self.cells.shape[0]

    def cell_areas(self) -> np.ndarray:
        v = self.vertices[self.cells]
        d1 = v[:, 1] - v[:, 0]
        d2 = v[:, 2] - v[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def build_tri_mesh(n_per_side: int, origin=(0.0, 0.0),
                   extent=(1.0, 1.0)) -> StructuredTriMesh:
    """Uniform two-triangles-per-cell mesh of the rectangle origin+extent."""
    n = int(n_per_side)
    origin = np.asarray(origin, dtype=float)
    extent = np.asarray(extent, dtype=float)
    if n < 1:
        raise ValueError(f"n_per_side must be >= 1, got {n_per_side}")
    if not np.all(extent > 0):
        raise ValueError(f"extent must be positive, got {extent}")

    xs = origin[0] + extent[0] * np.arange(n + 1) / n
    ys = origin[1] + extent[1] * np.arange(n + 1) / n
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (n + 1) + i

    cells = np.empty((2 * n * n, 3), dtype=np.int64)
    for j in range(n):
        for i in range(n):
            s = j * n + i
            a, b = vid(i, j), vid(i + 1, j)
            c, d = vid(i + 1, j + 1), vid(i, j + 1)
            cells[2 * s] = (a, b, c)
            cells[2 * s + 1] = (a, c, d)

    boundary_edges = {
        "bottom": [(2 * (0 * n + i), 0) for i in range(n)],
        "right": [(2 * (j * n + (n - 1)), 1) for j in range(n)],
        "top": [(2 * ((n - 1) * n + i) + 1, 1) for i in range(n)],
        "left": [(2 * (j * n + 0) + 1, 2) for j in range(n)],
    }
    boundary_edges = {k: np.array(v, dtype=np.int64)
                      for k, v in boundary_edges.items()}

    mesh = StructuredTriMesh(
        n_per_side=n, origin=origin, extent=extent, vertices=vertices,
        cells=cells, boundary_edges=boundary_edges,
        h=float(np.max(extent) / n),
    )
    areas = mesh.cell_areas()
    if np.any(areas <= 0):
        raise ValueError("mesh has nonpositive cell areas")
    total = float(extent[0] * extent[1])
    if abs(areas.sum() - total) > 1e-12 * total:
        raise ValueError("mesh areas do not sum to the domain area")
    return mesh


@dataclass(frozen=True)
class TensorKnotMesh:
    """Tensor-product knot grid of a rectangle with identity geometry."""

    n_per_side: int
    degree: int
    origin: np.ndarray
    extent: np.ndarray
    breaks_x: np.ndarray
    breaks_y: np.ndarray
    knots_x: np.ndarray
    knots_y: np.ndarray
    h: float

    @property
    def n_elements(self) -> int:
        return self.n_per_side ** 2


def open_knot_vector(breaks: np.ndarray, degree: int,
                     multiplicity: int = 1) -> np.ndarray:
    """Open knot vector on the given breakpoints.

    Interior breakpoints are repeated ``multiplicity`` times, lowering the
    continuity there to C^(degree - multiplicity).
    """
    if not 1 <= multiplicity <= degree:
        raise ValueError(f"multiplicity must be in [1, {degree}], "
                         f"got {multiplicity}")
    return np.concatenate([
        np.full(degree + 1, breaks[0]),
        np.repeat(breaks[1:-1], multiplicity),
        np.full(degree + 1, breaks[-1]),
    ])


def build_knot_mesh(n_per_side: int, degree: int, origin=(0.0, 0.0),
                    extent=(1.0, 1.0)) -> TensorKnotMesh:
    """Uniform open-knot tensor mesh for degree-``degree`` velocity splines."""
    n = int(n_per_side)
    origin = np.asarray(origin, dtype=float)
    extent = np.asarray(extent, dtype=float)
    if n < 1:
        raise ValueError(f"n_per_side must be >= 1, got {n_per_side}")
    if not np.all(extent > 0):
        raise ValueError(f"extent must be positive, got {extent}")
    if degree < 1:
        raise ValueError(f"degree must be >= 1, got {degree}")
    bx = origin[0] + extent[0] * np.arange(n + 1) / n
    by = origin[1] + extent[1] * np.arange(n + 1) / n
    return TensorKnotMesh(
        n_per_side=n, degree=degree, origin=origin, extent=extent,
        breaks_x=bx, breaks_y=by,
        knots_x=open_knot_vector(bx, degree),
        knots_y=open_knot_vector(by, degree),
        h=float(np.max(extent) / n),
    )


# ---------------------------------------------------------------------------
# Reference bases
# ---------------------------------------------------------------------------

def _tri_lagrange_nodes(k: int) -> np.ndarray:
    """Reference P_k nodes (a/k, b/k), a+b <= k, b-major ordering."""
    nodes = [(a / k, b / k) for b in range(k + 1) for a in range(k + 1 - b)]
    return np.array(nodes)


def _bernstein_tri(k: int, pts: np.ndarray):
    """Bernstein basis of degree k on the triangle: values and derivatives.

    Returns (val, dx, dy, dxx, dxy, dyy), each (n_funcs, n_pts), for the
    basis C(a,b,c) * l0^a l1^b l2^c with l0 = 1-x-y, l1 = x, l2 = y.
    """
    from math import comb

    x, y = pts[:, 0], pts[:, 1]
    lam = [1.0 - x - y, x, y]
    # d(lam)/dx = (-1, 1, 0); d(lam)/dy = (-1, 0, 1)
    pow_tab = []
    for lm in lam:
        tab = np.ones((k + 1, len(x)))
        for e in range(1, k + 1):
            tab[e] = tab[e - 1] * lm
        pow_tab.append(tab)

    def term(a, b, c):
        # product of powers with exponents clipped at 0 (callers multiply by
        # a factor that vanishes whenever a true exponent would be negative)
        if a < 0 or b < 0 or c < 0:
            return 0.0
        return pow_tab[0][a] * pow_tab[1][b] * pow_tab[2][c]

    multis = [(k - b - c, b, c) for c in range(k + 1) for b in range(k + 1 - c)]
    n_fun, n_pts = len(multis), len(x)
    out = [np.empty((n_fun, n_pts)) for _ in range(6)]
    for idx, (a, b, c) in enumerate(multis):
        C = comb(k, a) * comb(k - a, b)
        out[0][idx] = C * term(a, b, c)
        out[1][idx] = C * (-a * term(a - 1, b, c) + b * term(a, b - 1, c))
        out[2][idx] = C * (-a * term(a - 1, b, c) + c * term(a, b, c - 1))
        out[3][idx] = C * (a * (a - 1) * term(a - 2, b, c)
                           - 2 * a * b * term(a - 1, b - 1, c)
                           + b * (b - 1) * term(a, b - 2, c))
        out[4][idx] = C * (a * (a - 1) * term(a - 2, b, c)
                           - a * b * term(a - 1, b - 1, c)
                           - a * c * term(a - 1, b, c - 1)
                           + b * c * term(a, b - 1, c - 1))
        out[5][idx] = C * (a * (a - 1) * term(a - 2, b, c)
                           - 2 * a * c * term(a - 1, b, c - 1)
                           + c * (c - 1) * term(a, b, c - 2))
    return out


class _TriLagrangeBasis:
    """Nodal P_k basis on the reference triangle via a Bernstein change of basis."""

    def __init__(self, k: int):
        self.k = k
        self.nodes = _tri_lagrange_nodes(k)
        vander = _bernstein_tri(k, self.nodes)[0]  # (n_fun, n_nodes)
        # rows of coeff give each nodal function in the Bernstein basis
        self.coeff = np.linalg.inv(vander)
        self.n_loc = len(self.nodes)

    def eval(self, pts: np.ndarray):
        """Values/derivatives of the nodal basis: arrays (n_pts, n_loc, ...)."""
        b = _bernstein_tri(self.k, pts)
        val = (self.coeff @ b[0]).T
        grad = np.stack([(self.coeff @ b[1]).T, (self.coeff @ b[2]).T], axis=-1)
        dxx, dxy, dyy = ((self.coeff @ b[i]).T for i in (3, 4, 5))
        hess = np.empty(val.shape + (2, 2))
        hess[..., 0, 0] = dxx
        hess[..., 0, 1] = dxy
        hess[..., 1, 0] = dxy
        hess[..., 1, 1] = dyy
        return val, grad, hess


def bspline_ders(knots: np.ndarray, degree: int, u: float, n_ders: int):
    """Nonzero B-spline basis functions and derivatives at parameter u.

    Returns (span, ders) with ders[d, j] the d-th derivative of function
    span - degree + j; the classical knot-insertion recursion evaluated in
    place (Cox-de Boor with derivative triangles).
    """
    n_funcs = len(knots) - degree - 1
    span = int(np.searchsorted(knots, u, side="right") - 1)
    span = min(max(span, degree), n_funcs - 1)

    p = degree
    ndu = np.empty((p + 1, p + 1))
    left = np.empty(p + 1)
    right = np.empty(p + 1)
    ndu[0, 0] = 1.0
    for j in range(1, p + 1):
        left[j] = u - knots[span + 1 - j]
        right[j] = knots[span + j] - u
        saved = 0.0
        for r in range(j):
            ndu[j, r] = right[r + 1] + left[j - r]
            temp = ndu[r, j - 1] / ndu[j, r]
            ndu[r, j] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        ndu[j, j] = saved

    ders = np.zeros((n_ders + 1, p + 1))
    ders[0] = ndu[:, p]
    a = np.empty((2, p + 1))
    for r in range(p + 1):
        s1, s2 = 0, 1
        a[0, 0] = 1.0
        for kk in range(1, n_ders + 1):
            d = 0.0
            rk, pk = r - kk, p - kk
            if r >= kk:
                a[s2, 0] = a[s1, 0] / ndu[pk + 1, rk]
                d = a[s2, 0] * ndu[rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = kk - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[s2, j] = (a[s1, j] - a[s1, j - 1]) / ndu[pk + 1, rk + j]
                d += a[s2, j] * ndu[rk + j, pk]
            if r <= pk:
                a[s2, kk] = -a[s1, kk - 1] / ndu[pk + 1, r]
                d += a[s2, kk] * ndu[r, pk]
            ders[kk, r] = d
            s1, s2 = s2, s1
    fac = 1.0
    for kk in range(1, n_ders + 1):
        fac *= p - kk + 1
        ders[kk] *= fac
    return span, ders


def greville_abscissae(knots: np.ndarray, degree: int) -> np.ndarray:
    n_funcs = len(knots) - degree - 1
    return np.array([knots[i + 1:i + degree + 1].mean() for i in range(n_funcs)])


class _Bspline1D:
    """Univariate open B-spline space on fixed breakpoints.

    ``multiplicity`` is the interior knot repetition count; the first basis
    function supported on span s has index ``multiplicity * s``.
    """

    def __init__(self, breaks: np.ndarray, degree: int,
                 multiplicity: int = 1):
        self.degree = degree
        self.breaks = breaks
        self.multiplicity = multiplicity
        self.knots = open_knot_vector(breaks, degree, multiplicity)
        self.n_funcs = len(self.knots) - degree - 1
        self.n_spans = len(breaks) - 1

    def tabulate_spans(self, ref_pts: np.ndarray, n_ders: int = 2):
        """Tables B[d][span, q, j]; local function j is global mult*s + j."""
        p = self.degree
        out = np.zeros((n_ders + 1, self.n_spans, len(ref_pts), p + 1))
        for s in range(self.n_spans):
            a, b = self.breaks[s], self.breaks[s + 1]
            for q, t in enumerate(ref_pts):
                u = a + (b - a) * t
                span, ders = bspline_ders(self.knots, p, u, n_ders)
                assert span == self.multiplicity * s + p
                out[:, s, q, :] = ders[:n_ders + 1]
        return out

    def collocation_matrix(self) -> tuple[np.ndarray, np.ndarray]:
        """Greville points g and the matrix A[i, j] = N_j(g_i)."""
        g = greville_abscissae(self.knots, self.degree)
        A = np.zeros((self.n_funcs, self.n_funcs))
        for i, u in enumerate(g):
            span, ders = bspline_ders(self.knots, self.degree, u, 0)
            A[i, span - self.degree:span + 1] = ders[0]
        return g, A


# ---------------------------------------------------------------------------
# Scalar spaces and tabulation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Tabulation:
    """Per-element quadrature tabulation in physical coordinates.

    Shapes: xq (E, Q, 2); w (E, Q) including the geometry measure;
    N (E, Q, I); grad (E, Q, I, 2); hess (E, Q, I, 2, 2) or None;
    metric (E, 2, 2), the G tensor in the [-1, 1]-parent convention.
    """

    xq: np.ndarray
    w: np.ndarray
    N: np.ndarray
    grad: np.ndarray
    hess: np.ndarray | None
    metric: np.ndarray


@dataclass(frozen=True)
class BasisEval:
    """Single-element basis evaluation (see ``eval_basis``)."""

    points: np.ndarray
    weights: np.ndarray
    values: np.ndarray
    grads: np.ndarray
    hess: np.ndarray
    inv_jacobian: np.ndarray
    metric: np.ndarray


@dataclass(frozen=True)
class ScalarSpace:
    """Scalar C^0 space (one velocity component, or the pressure)."""

    family: str  # "lagrange" | "bspline"
    degree: int
    n_dofs: int
    connectivity: np.ndarray  # (E, n_loc)
    boundary_dofs: dict
    mesh: object
    _impl: object = field(repr=False)

    @property
    def n_elements(self) -> int:
        return self.connectivity.shape[0]

    @property
    def n_loc(self) -> int:
        return self.connectivity.shape[1]

    def tabulate(self, rule: QuadratureRule, need_hess: bool = True) -> Tabulation:
        """Basis values at the rule's points, memoized per rule content.

        Repeated assembly passes share the returned arrays; treat them as
        read-only.
        """
        key = (rule.cell, rule.points.tobytes(), rule.weights.tobytes(),
               bool(need_hess))
        cache = getattr(self._impl, "_tab_cache", None)
        if cache is None:
            cache = {}
            self._impl._tab_cache = cache
        tab = cache.get(key)
        if tab is None:
            tab = cache[key] = self._impl.tabulate(rule, need_hess)
        return tab

    def interpolate(self, f) -> np.ndarray:
        """Coefficients matching f: nodal values (Lagrange) or Greville
        collocation (B-spline); exact whenever f lies in the space."""
        return self._impl.interpolate(f)

    def boundary_values(self, side: str, f) -> tuple[np.ndarray, np.ndarray]:
        """Boundary DOFs of ``side`` and coefficients matching trace data f."""
        return self._impl.boundary_values(side, f)


class _LagrangeImpl:
    def __init__(self, mesh: StructuredTriMesh, k: int):
        self.mesh = mesh
        self.k = k
        self.basis = _TriLagrangeBasis(k)
        n = mesh.n_per_side
        m = n * k + 1
        self.m = m
        hx = mesh.extent[0] / n
        hy = mesh.extent[1] / n
        self.hx, self.hy = hx, hy

        ref = (self.basis.nodes * k).round().astype(int)  # (n_loc, 2) = (a, b)
        a, b = ref[:, 0], ref[:, 1]
        conn = np.empty((mesh.n_elements, self.basis.n_loc), dtype=np.int64)
        for j in range(n):
            for i in range(n):
                s = j * n + i
                ii_lo, jj_lo = i * k + a + b, j * k + b
                ii_up, jj_up = i * k + a, j * k + a + b
                conn[2 * s] = jj_lo * m + ii_lo
                conn[2 * s + 1] = jj_up * m + ii_up
        self.connectivity = conn

        ii, jj = np.meshgrid(np.arange(m), np.arange(m), indexing="xy")
        self.dof_points = np.column_stack([
            (mesh.origin[0] + ii.ravel() * hx / k),
            (mesh.origin[1] + jj.ravel() * hy / k),
        ])
        idx = np.arange(m * m).reshape(m, m)  # [j, i]
        self.boundary_dofs = {
            "left": idx[:, 0].copy(),
            "right": idx[:, -1].copy(),
            "bottom": idx[0, :].copy(),
            "top": idx[-1, :].copy(),
        }

        # unit-parent Jacobians of the two triangle shapes
        self.F = np.array([
            [[hx, hx], [0.0, hy]],   # lower: (A, B, C)
            [[hx, 0.0], [hy, hy]],   # upper: (A, C, D)
        ])
        self.detF = np.array([np.linalg.det(F) for F in self.F])
        if np.any(np.abs(self.detF) < 1e-300):
            raise ValueError("singular geometry Jacobian")
        self.Finv = np.array([np.linalg.inv(F) for F in self.F])
        # G in the [-1, 1]-parent convention
        self.G = np.array([4.0 * np.linalg.inv(F @ F.T) for F in self.F])

    def tabulate(self, rule: QuadratureRule, need_hess: bool) -> Tabulation:
        if rule.cell != "triangle":
            raise ValueError("Lagrange spaces need a triangle rule")
        mesh = self.mesh
        E = mesh.n_elements
        val, gref, href = self.basis.eval(rule.points)
        Q, I = val.shape[0], val.shape[1]

        # physical derivatives per triangle shape (lower/upper)
        grad2 = np.einsum("qir,prd->pqid", gref, self.Finv)
        hess2 = np.einsum("qirs,prc,psd->pqicd", href, self.Finv, self.Finv)

        pattern = np.arange(E) % 2
        v0 = mesh.vertices[mesh.cells[:, 0]]  # (E, 2)
        xq = v0[:, None, :] + np.einsum("qr,edr->eqd", rule.points,
                                        self.F[pattern])
        w = rule.weights[None, :] * self.detF[pattern][:, None]
        N = np.broadcast_to(val[None], (E, Q, I)).copy()
        grad = grad2[pattern]
        hess = hess2[pattern] if need_hess else None
        return Tabulation(xq=xq, w=w, N=N, grad=grad, hess=hess,
                          metric=self.G[pattern])

    def interpolate(self, f) -> np.ndarray:
        return np.asarray(f(self.dof_points[:, 0], self.dof_points[:, 1]),
                          dtype=float)

    def boundary_values(self, side, f):
        dofs = self.boundary_dofs[side]
        pts = self.dof_points[dofs]
        return dofs, np.asarray(f(pts[:, 0], pts[:, 1]), dtype=float)

    def eval_basis(self, element: int, rule: QuadratureRule) -> BasisEval:
        tab = self.tabulate(rule, need_hess=True)
        p = element % 2
        return BasisEval(points=tab.xq[element], weights=tab.w[element],
                         values=tab.N[element], grads=tab.grad[element],
                         hess=tab.hess[element], inv_jacobian=self.Finv[p],
                         metric=self.G[p])


class _BsplineImpl:
    def __init__(self, mesh: TensorKnotMesh, degree: int,
                 multiplicity: int = 1):
        self.mesh = mesh
        self.degree = degree
        self.bx = _Bspline1D(mesh.breaks_x, degree, multiplicity)
        self.by = _Bspline1D(mesh.breaks_y, degree, multiplicity)
        nfx, nfy = self.bx.n_funcs, self.by.n_funcs
        self.nfx, self.nfy = nfx, nfy
        n = mesh.n_per_side
        p = degree

        jx = np.arange(p + 1)
        conn = np.empty((n * n, (p + 1) ** 2), dtype=np.int64)
        for sy in range(n):
            for sx in range(n):
                e = sy * n + sx
                gx = multiplicity * sx + jx
                gy = multiplicity * sy + jx
                conn[e] = (gy[:, None] * nfx + gx[None, :]).ravel()
        self.connectivity = conn

        idx = np.arange(nfx * nfy).reshape(nfy, nfx)
        self.boundary_dofs = {
            "left": idx[:, 0].copy(),
            "right": idx[:, -1].copy(),
            "bottom": idx[0, :].copy(),
            "top": idx[-1, :].copy(),
        }
        self.hx = float(mesh.breaks_x[1] - mesh.breaks_x[0])
        self.hy = float(mesh.breaks_y[1] - mesh.breaks_y[0])
        self.G = np.diag([4.0 / self.hx ** 2, 4.0 / self.hy ** 2])

    def tabulate(self, rule: QuadratureRule, need_hess: bool) -> Tabulation:
        if rule.cell != "square":
            raise ValueError("B-spline spaces need a square rule")
        # recover the 1D point set (tensor rule, y-major ordering)
        n1 = int(round(np.sqrt(len(rule.weights))))
        assert n1 * n1 == len(rule.weights), "tensor rule expected"
        pts_x = rule.points[:n1, 0]
        n = self.mesh.n_per_side
        p = self.degree

        Bx = self.bx.tabulate_spans(pts_x, 2)  # (3, n, n1, p+1)
        By = self.by.tabulate_spans(pts_x, 2)

        E = n * n
        Q = n1 * n1
        I = (p + 1) ** 2
        sy, sx = np.divmod(np.arange(E), n)

        def combine(dx, dy):
            # (E, qy, qx, jy, jx) -> (E, Q, I)
            t = np.einsum("eyj,exi->eyxji", By[dy][sy], Bx[dx][sx])
            return t.reshape(E, Q, I)

        N = combine(0, 0)
        grad = np.stack([combine(1, 0), combine(0, 1)], axis=-1)
        hess = None
        if need_hess:
            hess = np.empty((E, Q, I, 2, 2))
            hess[..., 0, 0] = combine(2, 0)
            hess[..., 0, 1] = combine(1, 1)
            hess[..., 1, 0] = hess[..., 0, 1]
            hess[..., 1, 1] = combine(0, 2)

        ax = self.mesh.breaks_x[sx]
        ay = self.mesh.breaks_y[sy]
        Xq = ax[:, None] + self.hx * rule.points[None, :, 0]
        Yq = ay[:, None] + self.hy * rule.points[None, :, 1]
        xq = np.stack([Xq, Yq], axis=-1)
        w = np.broadcast_to(rule.weights[None, :] * (self.hx * self.hy),
                            (E, Q)).copy()
        metric = np.broadcast_to(self.G, (E, 2, 2)).copy()
        return Tabulation(xq=xq, w=w, N=N, grad=grad, hess=hess, metric=metric)

    def interpolate(self, f) -> np.ndarray:
        gx, Ax = self.bx.collocation_matrix()
        gy, Ay = self.by.collocation_matrix()
        X, Y = np.meshgrid(gx, gy, indexing="xy")
        V = np.asarray(f(X, Y), dtype=float)  # (nfy, nfx)
        C = np.linalg.solve(Ay, V)
        C = np.linalg.solve(Ax, C.T).T
        return C.ravel()

    def boundary_values(self, side, f):
        dofs = self.boundary_dofs[side]
        if side in ("bottom", "top"):
            g, A = self.bx.collocation_matrix()
            fixed = (self.mesh.breaks_y[0] if side == "bottom"
                     else self.mesh.breaks_y[-1])
            vals = np.linalg.solve(A, np.asarray(f(g, np.full_like(g, fixed)),
                                                 dtype=float))
        else:
            g, A = self.by.collocation_matrix()
            fixed = (self.mesh.breaks_x[0] if side == "left"
                     else self.mesh.breaks_x[-1])
            vals = np.linalg.solve(A, np.asarray(f(np.full_like(g, fixed), g),
                                                 dtype=float))
        return dofs, vals

    def eval_basis(self, element: int, rule: QuadratureRule) -> BasisEval:
        tab = self.tabulate(rule, need_hess=True)
        Finv = np.diag([1.0 / self.hx, 1.0 / self.hy])
        return BasisEval(points=tab.xq[element], weights=tab.w[element],
                         values=tab.N[element], grads=tab.grad[element],
                         hess=tab.hess[element], inv_jacobian=Finv,
                         metric=self.G)


def _make_lagrange_space(mesh: StructuredTriMesh, k: int) -> ScalarSpace:
    impl = _LagrangeImpl(mesh, k)
    return ScalarSpace(family="lagrange", degree=k, n_dofs=impl.m ** 2,
                       connectivity=impl.connectivity,
                       boundary_dofs=impl.boundary_dofs, mesh=mesh, _impl=impl)


def _make_bspline_space(mesh: TensorKnotMesh, k: int,
                        multiplicity: int = 1) -> ScalarSpace:
    impl = _BsplineImpl(mesh, k, multiplicity)
    return ScalarSpace(family="bspline", degree=k,
                       n_dofs=impl.nfx * impl.nfy,
                       connectivity=impl.connectivity,
                       boundary_dofs=impl.boundary_dofs, mesh=mesh, _impl=impl)


# ---------------------------------------------------------------------------
# Mixed velocity/pressure space
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MixedSpace:
    """Vector velocity (2 components of ``velocity``), pressure, and a second
    pressure field sharing the pressure space's connectivity exactly.

    Global unknown layout: [u_x | u_y | p | p2 | mean multipliers (2)], where
    p2 is the stabilization pressure (Oseen) or the fine-scale pressure
    increment (Navier-Stokes).
    """

    velocity: ScalarSpace
    pressure: ScalarSpace

    @property
    def n_scalar_v(self) -> int:
        return self.velocity.n_dofs

    @property
    def n_scalar_q(self) -> int:
        return self.pressure.n_dofs

    @property
    def off_uy(self) -> int:
        return self.velocity.n_dofs

    @property
    def off_p(self) -> int:
        return 2 * self.velocity.n_dofs

    @property
    def off_p2(self) -> int:
        return 2 * self.velocity.n_dofs + self.pressure.n_dofs

    @property
    def off_mult(self) -> int:
        return 2 * (self.velocity.n_dofs + self.pressure.n_dofs)

    @property
    def n_total(self) -> int:
        return self.off_mult + 2

    @property
    def n_elements(self) -> int:
        return self.velocity.n_elements

    def element_dofs(self, include_p2: bool = True) -> np.ndarray:
        """Global DOF gather map (E, n_loc_mixed), layout [ux|uy|p|p2]."""
        cv = self.velocity.connectivity
        cq = self.pressure.connectivity
        blocks = [cv, cv + self.off_uy, cq + self.off_p]
        if include_p2:
            blocks.append(cq + self.off_p2)
        return np.concatenate(blocks, axis=1)


def build_taylor_hood(mesh: StructuredTriMesh, k: int) -> MixedSpace:
    """Continuous P_k velocity with P_{k-1} pressure on a triangle mesh."""
    if k < 2:
        raise ValueError("velocity degree must be >= 2 (pressure needs C^0)")
    return MixedSpace(velocity=_make_lagrange_space(mesh, k),
                      pressure=_make_lagrange_space(mesh, k - 1))


def build_spline_taylor_hood(mesh: TensorKnotMesh, k: int) -> MixedSpace:
    """Degree-k velocity with degree-(k-1) pressure splines, both C^{k-2}.

    The shared continuity (double interior knots for the velocity, single
    for the pressure) is what makes the pair inf-sup stable; with maximally
    smooth C^{k-1} velocity the coarse pressure picks up a checkerboard
    mode under full Dirichlet data.  For k=2 this is the classical Q2/Q1
    pair.
    """
    if k < 2:
        raise ValueError("velocity degree must be >= 2 (pressure needs C^0)")
    if mesh.degree != k:
        raise ValueError(f"mesh carries degree {mesh.degree}, requested {k}")
    return MixedSpace(velocity=_make_bspline_space(mesh, k, multiplicity=2),
                      pressure=_make_bspline_space(mesh, k - 1))


def quadrature_for(space: MixedSpace, purpose: str = "assembly") -> QuadratureRule:
    """Rule with exactness >= 2k (assembly) or >= 2k+2 (error norms)."""
    k = space.velocity.degree
    degree = 2 * k if purpose == "assembly" else 2 * k + 2
    if space.velocity.family == "lagrange":
        return triangle_rule(degree)
    return square_rule(degree)


def eval_basis(space: ScalarSpace, element: int,
               rule: QuadratureRule) -> BasisEval:
    """Tabulate one element: values, physical gradients/Hessians, geometry."""
    if not 0 <= element < space.n_elements:
        raise IndexError(f"element {element} out of range")
    return space._impl.eval_basis(element, rule)
