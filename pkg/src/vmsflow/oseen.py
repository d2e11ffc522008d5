"""Steady fixed-advection solver: the three-field stabilized system and a
plain Galerkin reference variant, plus the discrete-divergence diagnostic."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .discretization import MixedSpace, QuadratureRule, quadrature_for
from .forms import FlowParameters, galerkin_batch, oseen_batch, tau_oseen
from .linalg import ConstraintSet, assemble, dump_matrix_market, solve_direct

__all__ = [
    "OseenProblem",
    "MixedSolution",
    "boundary_constraints",
    "solve_oseen",
    "discrete_divergence_residual",
]

VARIANTS = ("sharp", "galerkin")


@dataclass(frozen=True)
class OseenProblem:
    """Fixed-advection flow on a mixed space.

    ``dirichlet`` maps (x, y) on the boundary to the velocity pair; None
    means homogeneous data.  ``variant`` selects the mesh-size stabilization
    ("sharp") or switches it off entirely ("galerkin"), in which case the
    second pressure field is dropped from the system.
    """

    space: MixedSpace
    params: FlowParameters
    f: object = None
    dirichlet: object = None
    variant: str = "sharp"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.params.advection is None:
            raise ValueError("fixed-advection problem needs params.advection")


@dataclass(frozen=True)
class MixedSolution:
    """Solved coefficients in the full layout [u_x | u_y | p | p2 | mult].

    For the Galerkin variant the p2 block is zero and only the p-mean
    multiplier is populated.
    """

    space: MixedSpace
    coefficients: np.ndarray
    multipliers: np.ndarray

    @property
    def u(self) -> np.ndarray:
        """Velocity component coefficients, shape (2, n_scalar_v)."""
        nv = self.space.n_scalar_v
        return self.coefficients[:2 * nv].reshape(2, nv)

    @property
    def p(self) -> np.ndarray:
        s = self.space
        return self.coefficients[s.off_p:s.off_p + s.n_scalar_q]

    @property
    def p2(self) -> np.ndarray:
        s = self.space
        return self.coefficients[s.off_p2:s.off_p2 + s.n_scalar_q]


def boundary_constraints(space: MixedSpace, g=None, zero_mean_p: bool = True,
                         zero_mean_p2: bool = True) -> ConstraintSet:
    """Velocity Dirichlet data on all four sides from g(x, y) -> (gx, gy).

    Corner DOFs shared by two sides take the trace value computed last;
    the sides must therefore carry consistent corner data.
    """
    values = {}
    for side in ("bottom", "right", "top", "left"):
        for comp, off in ((0, 0), (1, space.off_uy)):
            if g is None:
                dofs = space.velocity.boundary_dofs[side]
                coeffs = np.zeros(len(dofs))
            else:
                dofs, coeffs = space.velocity.boundary_values(
                    side, lambda x, y, c=comp: np.asarray(g(x, y)[c], float))
            for d, c in zip(dofs, coeffs):
                values[off + int(d)] = float(c)
    cs = ConstraintSet(zero_mean_p=zero_mean_p, zero_mean_p2=zero_mean_p2)
    cs.set_dirichlet(list(values.keys()), list(values.values()))
    return cs


def solve_oseen(problem: OseenProblem,
                dump_basename: str | None = None) -> MixedSolution:
    """Assemble, constrain, and solve; returns the partitioned solution."""
    space = problem.space
    rule = quadrature_for(space, "assembly")
    galerkin = problem.variant == "galerkin"
    if galerkin:
        mats, vecs = galerkin_batch(space, rule, problem.params, f=problem.f)
        # The p2 rows/columns are identically zero with tau off; keep the
        # system nonsingular by assembling the two-field subset.
        nl = 2 * space.velocity.n_loc + space.pressure.n_loc
        mats, vecs = mats[:, :nl, :nl], vecs[:, :nl]
    else:
        tau = tau_oseen(problem.params, space.velocity.mesh.h)
        mats, vecs = oseen_batch(space, rule, problem.params,
                                 f=problem.f, tau=tau)
    cs = boundary_constraints(space, problem.dirichlet,
                              zero_mean_p2=not galerkin)
    system = assemble(space, mats, vecs, cs, include_p2=not galerkin)
    if dump_basename is not None:
        dump_matrix_market(system, dump_basename)
    x = solve_direct(system)

    full = np.zeros(space.n_total)
    n_base = space.off_p2 if galerkin else space.off_mult
    full[:n_base] = x[:n_base]
    mult = np.zeros(2)
    mult[:system.partition["mult"].stop - system.partition["mult"].start] = \
        x[system.partition["mult"]]
    full[space.off_mult:] = mult
    return MixedSolution(space=space, coefficients=full, multipliers=mult)


def discrete_divergence_residual(space: MixedSpace, coefficients: np.ndarray,
                                 rule: QuadratureRule | None = None) -> float:
    """max_j |int q_j div(u^h)| over the pressure basis, / ||u^h||_H1.

    Zero velocity returns 0.  The formulation keeps this at solver precision
    for every solved case because the coarse pressure test block contains
    only the divergence pairing.
    """
    if rule is None:
        rule = quadrature_for(space, "assembly")
    tab_v = space.velocity.tabulate(rule, need_hess=False)
    tab_q = space.pressure.tabulate(rule, need_hess=False)
    cv = space.velocity.connectivity
    u_loc = np.stack([coefficients[cv], coefficients[space.off_uy + cv]],
                     axis=1)
    div = np.einsum("eqia,eai->eq", tab_v.grad, u_loc)
    b_loc = np.einsum("eq,eqj->ej", tab_v.w * div, tab_q.N)
    b = np.zeros(space.n_scalar_q)
    np.add.at(b, space.pressure.connectivity, b_loc)

    uval = np.einsum("eqi,eai->eqa", tab_v.N, u_loc)
    gu = np.einsum("eqid,eai->eqad", tab_v.grad, u_loc)
    h1_sq = float(np.sum(tab_v.w * (np.sum(uval ** 2, axis=-1)
                                    + np.sum(gu ** 2, axis=(-2, -1)))))
    top = float(np.abs(b).max()) if b.size else 0.0
    return top / np.sqrt(h1_sq) if h1_sq > 0 else top
