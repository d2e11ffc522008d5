"""Global sparse assembly, boundary constraints, and direct linear solves."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .discretization import MixedSpace, QuadratureRule, quadrature_for

__all__ = [
    "ConstraintSet",
    "SparseSystem",
    "assemble",
    "assemble_rhs",
    "pressure_mean_weights",
    "solve_direct",
    "prepare_direct",
    "dump_matrix_market",
]


@dataclass
class ConstraintSet:
    """Dirichlet values keyed by global DOF plus zero-mean multiplier flags.

    ``zero_mean_p`` / ``zero_mean_p2`` request one scalar Lagrange multiplier
    each, enforcing a zero mean on the corresponding pressure field.
    """

    dirichlet: dict = field(default_factory=dict)
    zero_mean_p: bool = True
    zero_mean_p2: bool = True

    def set_dirichlet(self, dofs, values) -> None:
        """Add prescribed values; a DOF may be constrained only once."""
        dofs = np.atleast_1d(np.asarray(dofs, dtype=np.int64))
        values = np.broadcast_to(np.asarray(values, dtype=float), dofs.shape)
        for d, g in zip(dofs.ravel(), values.ravel()):
            d = int(d)
            if d in self.dirichlet:
                raise ValueError(f"DOF {d} constrained twice")
            self.dirichlet[d] = float(g)

    @property
    def n_multipliers(self) -> int:
        return int(self.zero_mean_p) + int(self.zero_mean_p2)


@dataclass
class SparseSystem:
    """Constrained global system: CSR matrix, right-hand side, DOF layout.

    ``partition`` maps field names ("u", "p", "p2", "mult") to index slices
    of the solution vector.
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    partition: dict

    @property
    def n(self) -> int:
        return self.rhs.shape[0]


def pressure_mean_weights(space: MixedSpace,
                          rule: QuadratureRule | None = None) -> np.ndarray:
    """Integrals w_j = int N_j dOmega of the pressure basis (global vector)."""
    if rule is None:
        rule = quadrature_for(space, "assembly")
    tab = space.pressure.tabulate(rule, need_hess=False)
    w_loc = np.einsum("eq,eqi->ei", tab.w, tab.N)
    w = np.zeros(space.pressure.n_dofs)
    np.add.at(w, space.pressure.connectivity, w_loc)
    return w


def assemble(space: MixedSpace, matrices: np.ndarray, vectors: np.ndarray,
             constraints: ConstraintSet, include_p2: bool = True,
             rule: QuadratureRule | None = None) -> SparseSystem:
    """Scatter element contributions into a constrained global system.

    Parameters
    ----------
    matrices, vectors:
        Batched element contributions, shapes (E, n_loc, n_loc) and
        (E, n_loc) in the local layout [ux | uy | p | p2]; drop the p2 block
        when ``include_p2`` is False (a two-field system, e.g. plain
        Galerkin, whose p2 rows would otherwise be identically zero).

    Dirichlet DOFs get identity rows with the prescribed value on the
    right-hand side; their columns are lifted (moved to the RHS) and zeroed,
    which keeps the sparsity pattern symmetric.  Each flagged pressure field
    gets one multiplier row/column with weights int N_j dOmega.
    """
    dofs = space.element_dofs(include_p2=include_p2)
    n_el, n_loc = dofs.shape
    matrices = np.asarray(matrices, dtype=float)
    vectors = np.asarray(vectors, dtype=float)
    if matrices.shape != (n_el, n_loc, n_loc):
        raise ValueError(f"element matrices {matrices.shape} do not match "
                         f"the mixed connectivity {(n_el, n_loc, n_loc)}")
    if vectors.shape != (n_el, n_loc):
        raise ValueError(f"element vectors {vectors.shape} do not match "
                         f"the mixed connectivity {(n_el, n_loc)}")
    if constraints.zero_mean_p2 and not include_p2:
        raise ValueError("zero-mean constraint requested for an absent "
                         "second pressure field")

    nq = space.n_scalar_q
    n_base = space.off_p2 + (nq if include_p2 else 0)
    n = n_base + constraints.n_multipliers

    rows = np.repeat(dofs, n_loc, axis=1).ravel()
    cols = np.tile(dofs, (1, n_loc)).ravel()
    data = matrices.ravel()

    rhs = np.zeros(n)
    np.add.at(rhs, dofs.ravel(), vectors.ravel())

    # Multiplier rows/columns (p first, then p2, for the flagged fields).
    mult_rows, mult_cols, mult_data = [], [], []
    next_mult = n_base
    mult_slice = slice(n_base, n)
    if constraints.n_multipliers:
        w = pressure_mean_weights(space, rule)
        j = np.arange(nq, dtype=np.int64)
        for flagged, off in ((constraints.zero_mean_p, space.off_p),
                             (constraints.zero_mean_p2, space.off_p2)):
            if not flagged:
                continue
            mult_rows.append(np.full(nq, next_mult, dtype=np.int64))
            mult_cols.append(off + j)
            mult_data.append(w)
            mult_rows.append(off + j)
            mult_cols.append(np.full(nq, next_mult, dtype=np.int64))
            mult_data.append(w)
            next_mult += 1

    rows = np.concatenate([rows] + mult_rows)
    cols = np.concatenate([cols] + mult_cols)
    data = np.concatenate([data] + mult_data)

    A = sp.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()

    if constraints.dirichlet:
        idx = np.fromiter(constraints.dirichlet.keys(), dtype=np.int64)
        vals = np.fromiter(constraints.dirichlet.values(), dtype=float)
        if idx.min() < 0 or idx.max() >= n:
            raise ValueError("Dirichlet DOF outside the global system")
        g = np.zeros(n)
        g[idx] = vals
        rhs = rhs - A @ g
        keep = np.ones(n)
        keep[idx] = 0.0
        pin = np.zeros(n)
        pin[idx] = 1.0
        D = sp.diags(keep)
        A = (D @ A @ D + sp.diags(pin)).tocsr()
        rhs *= keep
        rhs[idx] = vals

    partition = {
        "u": slice(0, space.off_p),
        "p": slice(space.off_p, space.off_p + nq),
        "p2": slice(space.off_p2, space.off_p2 + (nq if include_p2 else 0)),
        "mult": mult_slice,
    }
    return SparseSystem(matrix=A, rhs=rhs, partition=partition)


def assemble_rhs(space: MixedSpace, vectors: np.ndarray,
                 constraints: ConstraintSet,
                 include_p2: bool = True) -> np.ndarray:
    """The right-hand side ``assemble`` would produce, without the matrix.

    Only valid for homogeneous Dirichlet data (inhomogeneous values need
    the matrix for column lifting); lets nonlinear loops price a residual
    without paying for a Jacobian.
    """
    dofs = space.element_dofs(include_p2=include_p2)
    n_el, n_loc = dofs.shape
    vectors = np.asarray(vectors, dtype=float)
    if vectors.shape != (n_el, n_loc):
        raise ValueError(f"element vectors {vectors.shape} do not match "
                         f"the mixed connectivity {(n_el, n_loc)}")
    if constraints.zero_mean_p2 and not include_p2:
        raise ValueError("zero-mean constraint requested for an absent "
                         "second pressure field")
    if any(g != 0.0 for g in constraints.dirichlet.values()):
        raise ValueError("assemble_rhs needs homogeneous Dirichlet values")

    nq = space.n_scalar_q
    n = space.off_p2 + (nq if include_p2 else 0) + constraints.n_multipliers
    rhs = np.zeros(n)
    np.add.at(rhs, dofs.ravel(), vectors.ravel())
    if constraints.dirichlet:
        idx = np.fromiter(constraints.dirichlet.keys(), dtype=np.int64)
        if idx.min() < 0 or idx.max() >= n:
            raise ValueError("Dirichlet DOF outside the global system")
        rhs[idx] = 0.0
    return rhs


def solve_direct(system: SparseSystem, rel_tol: float = 1e-10) -> np.ndarray:
    """Sparse LU solve with a normalized-residual check.

    Systems with zero-mean multiplier rows are solved by a border exchange:
    the dense multiplier row/column pair would otherwise ruin the fill-in
    ordering, so each is swapped for a single-DOF pin before factorization;
    the pinned solution is shifted by a constant per pressure field to meet
    the mean constraint and the multiplier values are recovered from the
    exchanged rows.  The residual check runs against the original bordered
    matrix, so the exchange cannot silently change the answer.

    Raises RuntimeError when factorization fails (singular matrix, with the
    first structurally empty row/column named if one exists) or when the
    residual ||Ax - b||_inf / (||A||_inf ||x||_inf + ||b||_inf) exceeds
    ``rel_tol``.
    """
    return prepare_direct(system, rel_tol)(system.rhs)


def prepare_direct(system: SparseSystem, rel_tol: float = 1e-10):
    """Factor the system matrix once and return ``solve(b) -> x``.

    Every call carries the same residual guarantee as ``solve_direct``;
    reuse pays off when one linearization serves several right-hand
    sides (defect iterations, time stepping with a frozen Jacobian).
    """
    mult = system.partition.get("mult", slice(0, 0))
    A = system.matrix
    if mult.stop > mult.start:
        inner = _prepare_bordered(system)
    else:
        try:
            lu = spla.splu(A.tocsc(), permc_spec="COLAMD")
        except RuntimeError as exc:
            detail = _singularity_hint(A)
            raise RuntimeError(
                f"sparse LU factorization failed: {exc}{detail}")
        inner = lu.solve
    norm_a = np.abs(A).sum(axis=1).max()
    refine = mult.stop > mult.start

    def solve(b: np.ndarray) -> np.ndarray:
        x = inner(b)
        if refine:
            # the exchanged core is worse conditioned than the bordered
            # matrix; polish against the original, reusing the factorization
            for _ in range(3):
                r = b - A @ x
                denom = norm_a * np.abs(x).max() + np.abs(b).max()
                rel = np.abs(r).max() / denom if denom > 0 else np.abs(r).max()
                if rel <= 0.1 * rel_tol:
                    break
                x = x + inner(r)
        if not np.all(np.isfinite(x)):
            raise RuntimeError("sparse LU produced non-finite entries "
                               "(numerically singular matrix)")
        r = A @ x - b
        denom = norm_a * np.abs(x).max() + np.abs(b).max()
        rel = np.abs(r).max() / denom if denom > 0 else np.abs(r).max()
        if rel > rel_tol:
            raise RuntimeError(f"direct solve residual {rel:.3e} exceeds "
                               f"{rel_tol:.1e}")
        return x

    return solve


def _prepare_bordered(system: SparseSystem):
    """Border-exchange factorization of a multiplier-constrained system;
    returns an exact ``solve(b)`` for the original bordered matrix.

    Valid because a constant shift of a pressure field leaves every
    non-multiplier equation invariant (zero row sums of the pressure
    blocks; lifted Dirichlet columns); the residual check in
    ``prepare_direct`` guards that assumption.
    """
    A = system.matrix
    n = system.n
    mult = system.partition["mult"]
    csc = A.tocsc()
    mult_idx = np.arange(mult.start, mult.stop)

    pins = []  # per multiplier: (pin DOF, field slice, weights on the slice)
    for j in mult_idx:
        col = csc[:, int(j)].tocoo()
        support = col.row
        vals = col.data
        if support.size == 0:
            raise RuntimeError(f"multiplier column {j} has no entries")
        fields = [system.partition[name] for name in ("p", "p2")]
        fs = next(s for s in fields
                  if s.start <= support[0] < s.stop)
        w = np.zeros(fs.stop - fs.start)
        w[support - fs.start] = vals
        if w.sum() == 0:
            raise RuntimeError(f"multiplier {j} weights sum to zero")
        pin = int(support[np.argmax(np.abs(vals))])
        pins.append((pin, fs, w))

    # swap the dense border for unit pins
    coo = A.tocoo()
    in_border = np.isin(coo.row, mult_idx) | np.isin(coo.col, mult_idx)
    pin_dofs = np.array([p[0] for p in pins], dtype=np.int64)
    rows = np.concatenate([coo.row[~in_border], mult_idx, pin_dofs])
    cols = np.concatenate([coo.col[~in_border], pin_dofs, mult_idx])
    data = np.concatenate([coo.data[~in_border],
                           np.ones(2 * len(pins))])
    core = sp.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsc()
    try:
        lu = spla.splu(core, permc_spec="COLAMD")
    except RuntimeError as exc:
        detail = _singularity_hint(core.tocsr())
        raise RuntimeError(f"sparse LU factorization failed: {exc}{detail}")

    m = len(pins)
    pin_rows = A[pin_dofs, :].toarray()
    pin_rows[:, mult] = 0.0
    # multiplier-column responses of the core (one solve each)
    Z = np.empty((n, m))
    for i, (pin, fs, w) in enumerate(pins):
        rhs_w = np.zeros(n)
        rhs_w[fs] = w
        Z[:, i] = lu.solve(rhs_w)
    Z[mult, :] = 0.0
    # lambda system from the two exchanged rows (constants drop out)
    lam_mat = np.empty((m, m))
    for i, (pin, fs, w) in enumerate(pins):
        for j in range(m):
            lam_mat[i, j] = -pin_rows[i] @ Z[:, j]
        lam_mat[i, i] += w[pin - fs.start]

    def exchange_solve(rhs):
        y = lu.solve(rhs)
        y[mult] = 0.0
        lam_rhs = np.array([rhs[d] - pin_rows[i] @ y
                            for i, d in enumerate(pin_dofs)])
        lam = np.linalg.solve(lam_mat, lam_rhs)
        y = y - Z @ lam
        for (pin, fs, w), j, lam_i in zip(pins, mult_idx, lam):
            y[fs] += (rhs[j] - w @ y[fs]) / w.sum()
        y[mult] = lam
        return y

    return exchange_solve


def _singularity_hint(A: sp.csr_matrix) -> str:
    """Name the first all-zero row or column, the usual structural culprit."""
    row_counts = np.diff(A.indptr)
    empty = np.flatnonzero(row_counts == 0)
    if empty.size:
        return f" (row {empty[0]} has no entries)"
    col_counts = np.diff(A.tocsc().indptr)
    empty = np.flatnonzero(col_counts == 0)
    if empty.size:
        return f" (column {empty[0]} has no entries)"
    return ""


def dump_matrix_market(system: SparseSystem, basename: str) -> None:
    """Write <basename>.mtx / <basename>_rhs.mtx for external inspection."""
    scipy.io.mmwrite(f"{basename}.mtx", system.matrix.tocoo())
    scipy.io.mmwrite(f"{basename}_rhs.mtx", system.rhs.reshape(-1, 1))
