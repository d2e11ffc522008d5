"""Nonlinear flow solvers: steady Picard/Newton driver and implicit-midpoint
time stepping with dynamic or quasi-static fine-scale velocity closures."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .discretization import MixedSpace, quadrature_for
from .forms import FlowParameters, ns_midpoint_batch, ns_steady_batch
from .linalg import (ConstraintSet, assemble, assemble_rhs,
                     dump_matrix_market, prepare_direct, solve_direct)
from .oseen import MixedSolution, discrete_divergence_residual

__all__ = [
    "FREE_SLIP",
    "NSProblem",
    "FlowState",
    "SubscaleState",
    "TimeStepConfig",
    "IterationLog",
    "ns_constraints",
    "initial_state",
    "project_initial_velocity",
    "solve_ns_steady",
    "advance_midpoint",
    "advance_midpoint_quasistatic",
    "run_unsteady",
    "kinetic_energy",
    "subscale_energy",
    "total_energy",
]

SIDES = ("bottom", "right", "top", "left")
SUBSCALE_MODELS = ("dynamic", "quasistatic")
FREE_SLIP = "free-slip"

# outward normal of each axis-aligned side points along this component
_NORMAL_COMPONENT = {"bottom": 1, "top": 1, "left": 0, "right": 0}


@dataclass(frozen=True)
class NSProblem:
    """Nonlinear flow problem on a mixed space.

    ``bcs`` maps each of the four sides to either the string "free-slip"
    (strong zero normal component, natural tangential condition) or to
    Dirichlet data: a callable g(x, y) -> (gx, gy), a constant pair, or
    None for homogeneous.  A missing ``bcs`` means homogeneous Dirichlet
    everywhere.  ``u0`` (callable pair) seeds the unsteady solvers via a
    discretely divergence-free projection.
    """

    space: MixedSpace
    params: FlowParameters
    f: object = None
    bcs: dict | None = None
    u0: object = None
    subscale_model: str = "dynamic"

    def __post_init__(self):
        if self.subscale_model not in SUBSCALE_MODELS:
            raise ValueError(f"subscale model must be one of "
                             f"{SUBSCALE_MODELS}")
        if self.bcs is not None and set(self.bcs) != set(SIDES):
            raise ValueError(f"bcs must cover exactly the sides {SIDES}, "
                             f"got {sorted(self.bcs)}")


@dataclass
class FlowState:
    """Coarse unknowns in the full layout [u_x | u_y | p | p2 | mult]."""

    coefficients: np.ndarray
    t: float
    step: int = 0

    def solution(self, space: MixedSpace) -> MixedSolution:
        return MixedSolution(space=space, coefficients=self.coefficients,
                             multipliers=self.coefficients[space.off_mult:])


@dataclass
class SubscaleState:
    """Fine-scale velocity samples u' at the assembly quadrature points.

    ``values`` has shape (n_elements, n_quad, 2), congruent with the
    assembly rule of the space; ``step_index`` is the last committed step.
    """

    values: np.ndarray
    step_index: int = 0

    @classmethod
    def zeros(cls, space: MixedSpace) -> "SubscaleState":
        rule = quadrature_for(space, "assembly")
        return cls(values=np.zeros((space.n_elements, len(rule.weights), 2)))

    def check_congruent(self, space: MixedSpace) -> None:
        rule = quadrature_for(space, "assembly")
        want = (space.n_elements, len(rule.weights), 2)
        if self.values.shape != want:
            raise ValueError(f"subscale samples {self.values.shape} do not "
                             f"match the assembly quadrature {want}")


@dataclass(frozen=True)
class TimeStepConfig:
    dt: float
    t_end: float
    rel_tol: float = 1e-10
    max_iters: int = 20
    # the previous state is already a good guess; Picard damping off by
    # default (raise for cold starts or large steps)
    picard_iters: int = 0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if self.t_end < self.dt:
            raise ValueError("t_end must be at least one step")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass
class IterationLog:
    """Residual-norm history of one nonlinear solve."""

    residuals: list = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return max(len(self.residuals) - 1, 0)


def _side_values(space: MixedSpace, side: str, g):
    """(dof, value) pairs for one side in the mixed velocity numbering."""
    out = []
    for comp, off in ((0, 0), (1, space.off_uy)):
        if g is None:
            dofs = space.velocity.boundary_dofs[side]
            vals = np.zeros(len(dofs))
        elif callable(g):
            dofs, vals = space.velocity.boundary_values(
                side, lambda x, y, c=comp: np.asarray(g(x, y)[c], float))
        else:
            dofs = space.velocity.boundary_dofs[side]
            vals = np.full(len(dofs), float(g[comp]))
        out.extend((off + int(d), float(v)) for d, v in zip(dofs, vals))
    return out


def ns_constraints(problem: NSProblem,
                   homogeneous: bool = False) -> ConstraintSet:
    """Velocity constraints from the per-side BC spec.

    Dirichlet sides constrain both components to the trace data; free-slip
    sides constrain only the normal component to zero.  ``homogeneous``
    zeroes all values (increment constraints for the nonlinear loop).
    Conflicting corner values between adjacent sides are rejected.
    """
    space = problem.space
    values: dict = {}

    def put(dof, val):
        if dof in values and abs(values[dof] - val) > 1e-12:
            raise ValueError(f"conflicting boundary values at DOF {dof}: "
                             f"{values[dof]} vs {val}")
        values[dof] = val

    for side in SIDES:
        spec = None if problem.bcs is None else problem.bcs[side]
        if isinstance(spec, str):
            if spec != FREE_SLIP:
                raise ValueError(f"unknown boundary condition {spec!r}")
            comp = _NORMAL_COMPONENT[side]
            off = 0 if comp == 0 else space.off_uy
            for d in space.velocity.boundary_dofs[side]:
                put(off + int(d), 0.0)
        else:
            for dof, val in _side_values(space, side, spec):
                put(dof, 0.0 if homogeneous else val)
    if homogeneous:
        values = {d: 0.0 for d in values}
    cs = ConstraintSet()
    cs.set_dirichlet(list(values.keys()), list(values.values()))
    return cs


def _lifted_start(space: MixedSpace, cs: ConstraintSet) -> np.ndarray:
    x = np.zeros(space.n_total)
    for d, g in cs.dirichlet.items():
        x[d] = g
    return x


def _nonlinear_loop(space, kernel, x, cs_inc, rel_tol, max_iters,
                    picard_iters, dump_basename=None, refresh="every",
                    solve=None):
    """Shared Picard-then-Newton increment iteration.

    ``kernel(x, mode)`` returns (R, J, payload) for mode "picard" or
    "newton" and (R, None, payload) for mode "residual"; the converged
    payload (e.g. updated subscale samples) is returned with the state.
    Convergence: assembled free-DOF residual norm <= rel_tol * its first
    value.

    refresh "every" rebuilds the linearization each iteration (true
    Picard/Newton).  "lazy" freezes the factored Jacobian and re-solves
    fresh residuals against it, rebuilding only when the residual
    contracts by less than 4x in one pass; the converged state meets the
    same residual test either way, only the path differs.  Lazy mode
    suits time stepping, where the previous state already sits inside the
    Newton basin; passing the previous step's returned ``solve`` carries
    the factorization across steps (the stall guard forces a rebuild when
    it drifts too stale).
    """
    log = IterationLog()
    payload = None
    for it in range(max_iters + 1):
        mode = "picard" if it < picard_iters else "newton"
        build = refresh == "every" or solve is None
        R, J, payload = kernel(x, mode if build else "residual")
        system = assemble(space, J, -R, cs_inc) if build else None
        rhs = system.rhs if build else assemble_rhs(space, -R, cs_inc)
        rnorm = float(np.linalg.norm(rhs))
        log.residuals.append(rnorm)
        if rnorm <= rel_tol * log.residuals[0]:
            log.converged = True
            break
        if it == max_iters:
            break
        stalled = len(log.residuals) >= 2 and (
            not np.isfinite(rnorm) or rnorm > 0.25 * log.residuals[-2])
        if system is None and stalled:
            # stalled on the frozen Jacobian: rebuild at the current state
            R, J, payload = kernel(x, mode)
            system = assemble(space, J, -R, cs_inc)
        if system is not None:
            if dump_basename is not None:
                dump_matrix_market(system, f"{dump_basename}_it{it}")
            solve = prepare_direct(system)
        y = solve(rhs)
        x = x.copy()
        x[:space.off_mult] += y[:space.off_mult]
        x[space.off_mult:] = y[space.off_mult:]
    if not log.converged:
        hist = ", ".join(f"{r:.3e}" for r in log.residuals)
        raise RuntimeError(f"nonlinear iteration stalled after "
                           f"{log.iterations} iterations; residual history: "
                           f"[{hist}]")
    return x, payload, log, solve


def solve_ns_steady(problem: NSProblem, rel_tol: float = 1e-11,
                    max_iters: int = 30, picard_iters: int = 2,
                    dump_basename: str | None = None):
    """Steady solve with quasi-static subscales and smoothed steady tau.

    Returns (MixedSolution, IterationLog).  Raises RuntimeError with the
    residual history if the iteration does not converge.
    """
    space = problem.space
    rule = quadrature_for(space, "assembly")
    cs_inc = ns_constraints(problem, homogeneous=True)
    x0 = _lifted_start(space, ns_constraints(problem))

    def kernel(x, mode):
        want_j = mode != "residual"
        R, J, _ = ns_steady_batch(space, rule, problem.params, x,
                                  f=problem.f,
                                  linearization=mode if want_j else "newton",
                                  jacobian=want_j)
        return R, J, None

    x, _, log, _ = _nonlinear_loop(space, kernel, x0, cs_inc, rel_tol,
                                   max_iters, picard_iters,
                                   dump_basename=dump_basename)
    sol = MixedSolution(space=space, coefficients=x,
                        multipliers=x[space.off_mult:])
    return sol, log


def project_initial_velocity(problem: NSProblem) -> np.ndarray:
    """Constrained L2 projection of u0 onto the discretely
    divergence-free subset of the velocity space (full-layout vector).

    Solves the mass/divergence saddle problem with the problem's velocity
    constraints, so the result satisfies them and b(u, q) = 0 for every
    pressure test function.
    """
    space = problem.space
    rule = quadrature_for(space, "assembly")
    tab_v = space.velocity.tabulate(rule, need_hess=False)
    tab_q = space.pressure.tabulate(rule, need_hess=False)
    E, Q, nv = tab_v.N.shape
    nq = tab_q.N.shape[2]
    nl = 2 * nv + nq

    A = np.zeros((E, nl, nl))
    b = np.zeros((E, nl))
    w = tab_v.w
    mass = np.einsum("eq,eqi,eqj->eij", w, tab_v.N, tab_v.N)
    bdiv = np.einsum("eq,eqm,eqia->eami", w, tab_q.N, tab_v.grad)
    if problem.u0 is None:
        u0v = np.zeros((E, Q, 2))
    else:
        x, y = tab_v.xq[..., 0], tab_v.xq[..., 1]
        u0v = np.stack([np.broadcast_to(np.asarray(c, float), x.shape)
                        for c in problem.u0(x, y)], axis=-1)
    for a in range(2):
        sl = slice(a * nv, (a + 1) * nv)
        A[:, sl, sl] = mass
        A[:, 2 * nv:, sl] = bdiv[:, a]
        A[:, sl, 2 * nv:] = np.swapaxes(bdiv[:, a], 1, 2)
        b[:, sl] = np.einsum("eq,eqi->ei", w * u0v[..., a], tab_v.N)

    cs = ns_constraints(problem)
    cs_proj = ConstraintSet(dirichlet=dict(cs.dirichlet),
                            zero_mean_p=True, zero_mean_p2=False)
    system = assemble(space, A, b, cs_proj, include_p2=False)
    y = solve_direct(system)
    # keep only the velocity block; the pressure here is a multiplier field
    full = np.zeros(space.n_total)
    full[:space.off_p] = y[:space.off_p]
    return full


def initial_state(problem: NSProblem) -> FlowState:
    """Step-0 state: projected u0, or the plain boundary lift if u0 is
    None."""
    if problem.u0 is None:
        x = _lifted_start(problem.space, ns_constraints(problem))
        return FlowState(coefficients=x, t=0.0, step=0)
    return FlowState(coefficients=project_initial_velocity(problem),
                     t=0.0, step=0)


def _advance(problem: NSProblem, state: FlowState, subscales: SubscaleState,
             config: TimeStepConfig, model: str, solve=None):
    space = problem.space
    rule = quadrature_for(space, "assembly")
    subscales.check_congruent(space)
    cs_inc = ns_constraints(problem, homogeneous=True)
    prev = state.coefficients
    t_mid = state.t + 0.5 * config.dt

    def kernel(x, mode):
        want_j = mode != "residual"
        R, J, s_n, _ = ns_midpoint_batch(
            space, rule, problem.params, x, prev, subscales.values,
            config.dt, f=problem.f, t_mid=t_mid, model=model,
            linearization=mode if want_j else "newton", jacobian=want_j)
        return R, J, s_n

    x, s_n, log, solve = _nonlinear_loop(space, kernel, prev.copy(), cs_inc,
                                         config.rel_tol, config.max_iters,
                                         config.picard_iters, refresh="lazy",
                                         solve=solve)
    new_state = FlowState(coefficients=x, t=state.t + config.dt,
                          step=state.step + 1)
    new_sub = SubscaleState(values=s_n, step_index=subscales.step_index + 1)
    return new_state, new_sub, log, solve


def advance_midpoint(problem: NSProblem, state: FlowState,
                     subscales: SubscaleState, config: TimeStepConfig):
    """One implicit-midpoint step with the dynamic fine-scale update.

    The fine-scale samples are refreshed from the pointwise update inside
    every nonlinear iteration and committed on convergence.  Returns
    (new state, committed SubscaleState, IterationLog).
    """
    new_state, new_sub, log, _ = _advance(problem, state, subscales, config,
                                          "dynamic")
    return new_state, new_sub, log


def advance_midpoint_quasistatic(problem: NSProblem, state: FlowState,
                                 config: TimeStepConfig):
    """One implicit-midpoint step with the algebraic (quasi-static)
    closure; no fine-scale state is carried.  Returns (new state,
    IterationLog)."""
    dummy = SubscaleState.zeros(problem.space)
    new_state, _, log, _ = _advance(problem, state, dummy, config,
                                    "quasistatic")
    return new_state, log


def kinetic_energy(space: MixedSpace, coefficients: np.ndarray) -> float:
    """(1/2) integral of |u^h|^2."""
    rule = quadrature_for(space, "assembly")
    tab = space.velocity.tabulate(rule, need_hess=False)
    cv = space.velocity.connectivity
    u_loc = np.stack([coefficients[cv], coefficients[space.off_uy + cv]],
                     axis=1)
    uval = np.einsum("eqi,eai->eqa", tab.N, u_loc)
    return 0.5 * float(np.sum(tab.w * np.sum(uval ** 2, axis=-1)))


def subscale_energy(space: MixedSpace, values: np.ndarray) -> float:
    """(1/2) quadrature norm of the fine-scale samples."""
    rule = quadrature_for(space, "assembly")
    tab = space.velocity.tabulate(rule, need_hess=False)
    return 0.5 * float(np.sum(tab.w * np.sum(values ** 2, axis=-1)))


def total_energy(space: MixedSpace, state: FlowState,
                 subscales: SubscaleState | None = None) -> float:
    e = kinetic_energy(space, state.coefficients)
    if subscales is not None:
        e += subscale_energy(space, subscales.values)
    return e


def run_unsteady(problem: NSProblem, config: TimeStepConfig,
                 observer=None):
    """Fixed-step midpoint time loop from the projected initial state.

    The subscale model comes from the problem; per-step scalar rows
    (time, energy, divergence residual, nonlinear iterations) are
    collected and returned with the final state: (state, subscales or
    None, rows).  ``observer(state, subscales)`` runs after each commit.
    """
    space = problem.space
    dynamic = problem.subscale_model == "dynamic"
    state = initial_state(problem)
    subscales = SubscaleState.zeros(space) if dynamic else None

    def row(st, sub, iters):
        return {
            "time": st.t,
            "energy": total_energy(space, st, sub),
            "div_residual": discrete_divergence_residual(
                space, st.coefficients),
            "iterations": iters,
        }

    rows = [row(state, subscales, 0)]
    solve = None  # factorization carried across steps (rebuilt on stall)
    dummy = SubscaleState.zeros(space) if not dynamic else None
    for _ in range(config.n_steps):
        if dynamic:
            state, subscales, log, solve = _advance(
                problem, state, subscales, config, "dynamic", solve=solve)
        else:
            state, _, log, solve = _advance(
                problem, state, dummy, config, "quasistatic", solve=solve)
        rows.append(row(state, subscales, log.iterations))
        if observer is not None:
            observer(state, subscales)
    return state, subscales, rows
