"""Element-level weak forms, stabilization parameters, and error norms.

All kernels are written against the batched tabulations produced by
``discretization``: arrays indexed (element, quadrature point, local basis
function, ...).  Local mixed DOF layout within an element is
[u_x | u_y | p | p2] where p2 is the extra pressure field (the
stabilization pressure in the linear solver, the fine-scale pressure in
the nonlinear one).

Velocity test/trial functions are vector-valued with a single nonzero
component; a flattened velocity index J = comp * n_loc + j is used for
the dense element blocks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .discretization import MixedSpace, QuadratureRule, Tabulation


# ---------------------------------------------------------------------------
# Parameters and stabilization coefficients
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FlowParameters:
    """Physical/model constants shared by the kernels.

    ``advection`` is the constant advecting field of the linear problem
    (unused by the nonlinear kernels).  ``c_inv`` scales the viscous branch
    of the stabilization time scale.  ``length_scale`` is the global length
    used in the pressure-error weight (longest domain side).
    """

    nu: float
    advection: np.ndarray | None = None
    c_inv: float = 36.0
    length_scale: float = 1.0

    def __post_init__(self):
        if self.nu < 0:
            raise ValueError(f"viscosity must be >= 0, got {self.nu}")
        if self.c_inv <= 0:
            raise ValueError(f"c_inv must be > 0, got {self.c_inv}")
        if self.length_scale <= 0:
            raise ValueError(f"length_scale must be > 0, got {self.length_scale}")
        if self.advection is not None:
            object.__setattr__(self, "advection",
                               np.asarray(self.advection, dtype=float))


@dataclass(frozen=True)
class StabEval:
    """Momentum and continuity stabilization coefficients.

    ``tau_m`` has units of time, ``tau_c`` of length*velocity.  Scalars for
    the mesh-size form, (E, Q) arrays for the pointwise smoothed forms.
    ``variant`` is "sharp", "smoothed", or "smoothed-unsteady".
    """

    tau_m: float | np.ndarray
    tau_c: float | np.ndarray
    variant: str


def tau_oseen(params: FlowParameters, h: float) -> StabEval:
    """Mesh-size stabilization: tau_m = min{h/(2|a|), h^2/(c_inv nu)},
    tau_c = max{h|a|, nu}.  A degenerate branch (|a| = 0 or nu = 0) falls
    back to the other one."""
    if h <= 0:
        raise ValueError(f"h must be > 0, got {h}")
    a = params.advection
    amag = 0.0 if a is None else float(np.linalg.norm(a))
    branches = []
    if amag > 0:
        branches.append(h / (2 * amag))
    if params.nu > 0:
        branches.append(h * h / (params.c_inv * params.nu))
    if not branches:
        raise ValueError("tau_oseen needs |a| > 0 or nu > 0")
    return StabEval(tau_m=min(branches), tau_c=max(h * amag, params.nu),
                    variant="sharp")


def tau_smoothed(u_at_q: np.ndarray, G: np.ndarray, params: FlowParameters,
                 dt: float | None = None) -> StabEval:
    """Pointwise smoothed stabilization from the element metric tensor G.

    tau_m = (u.G.u + c_inv^2 nu^2 G:G)^{-1/2}, with an extra 4/dt^2 term
    inside the root when ``dt`` is given; tau_c = (tau_m tr G)^{-1}.
    Accepts broadcastable arrays: u_at_q (..., 2), G (..., 2, 2).
    """
    u = np.asarray(u_at_q, dtype=float)
    G = np.asarray(G, dtype=float)
    uGu = np.einsum("...a,...ab,...b->...", u, G, u)
    GG = np.einsum("...ab,...ab->...", G, G)
    s = uGu + (params.c_inv * params.nu) ** 2 * GG
    if dt is not None:
        if dt <= 0:
            raise ValueError(f"dt must be > 0, got {dt}")
        s = s + 4.0 / dt ** 2
    if np.any(s <= 0):
        raise ValueError("degenerate stabilization: u = 0 and nu = 0 "
                         "with no time step")
    tau_m = s ** -0.5
    trG = np.einsum("...aa->...", G)
    tau_c = 1.0 / (tau_m * trG)
    variant = "smoothed" if dt is None else "smoothed-unsteady"
    if np.ndim(tau_m) == 0:
        tau_m, tau_c = float(tau_m), float(tau_c)
    return StabEval(tau_m=tau_m, tau_c=tau_c, variant=variant)


def pressure_error_weight(params: FlowParameters, h: float) -> float:
    """Weight on the pressure term of the stabilization-weighted error norm:
    nu^{-1} min{1, Pe^{-2}, Pe_h^{-1}} with global/element Peclet numbers
    Pe = |a| L / (2 nu), Pe_h = |a| h / (2 nu)."""
    a = params.advection
    amag = 0.0 if a is None else float(np.linalg.norm(a))
    if params.nu <= 0:
        raise ValueError("pressure error weight needs nu > 0")
    if amag == 0:
        return 1.0 / params.nu
    pe = amag * params.length_scale / (2 * params.nu)
    pe_h = amag * h / (2 * params.nu)
    return min(1.0, pe ** -2, pe_h ** -1) / params.nu


# ---------------------------------------------------------------------------
# Shared element machinery
# ---------------------------------------------------------------------------

@dataclass
class ElementContribution:
    """Dense local block matrix/vector over [u_x | u_y | p | p2]."""

    matrix: np.ndarray
    vector: np.ndarray


def mixed_tabulations(space: MixedSpace, rule: QuadratureRule,
                      need_hess: bool = True) -> tuple[Tabulation, Tabulation]:
    """Velocity and pressure tabulations on the same quadrature layout."""
    tab_v = space.velocity.tabulate(rule, need_hess=need_hess)
    tab_q = space.pressure.tabulate(rule, need_hess=False)
    return tab_v, tab_q


def local_coefficients(space: MixedSpace, vec: np.ndarray):
    """Gather (u_loc (E,2,nv), p_loc (E,nq), p2_loc (E,nq)) from a global
    vector laid out [u_x | u_y | p | p2 | ...]."""
    cv = space.velocity.connectivity
    cq = space.pressure.connectivity
    u_loc = np.stack([vec[cv], vec[space.off_uy + cv]], axis=1)
    return u_loc, vec[space.off_p + cq], vec[space.off_p2 + cq]


def _as_eq(arr, E, Q):
    """Broadcast a scalar or per-point coefficient array to shape (E, Q)."""
    return np.broadcast_to(np.asarray(arr, dtype=float), (E, Q))


def _fields(tab_v: Tabulation, tab_q: Tabulation, u_loc, p_loc, p2_loc):
    """Pointwise values of the discrete fields and their derivatives."""
    N, D, H = tab_v.N, tab_v.grad, tab_v.hess
    u = np.einsum("eqi,eai->eqa", N, u_loc)
    gu = np.einsum("eqid,eai->eqad", D, u_loc)        # gu[...,a,d] = d_d u_a
    div = gu[..., 0, 0] + gu[..., 1, 1]
    lap = np.einsum("eqicc,eai->eqa", H, u_loc)
    gdiv = np.einsum("eqida,eai->eqd", H, u_loc)      # d_d (div u)
    p = np.einsum("eqm,em->eq", tab_q.N, p_loc)
    gp = np.einsum("eqmd,em->eqd", tab_q.grad, p_loc)
    p2 = np.einsum("eqm,em->eq", tab_q.N, p2_loc)
    gp2 = np.einsum("eqmd,em->eqd", tab_q.grad, p2_loc)
    return u, gu, div, lap, gdiv, p, gp, p2, gp2


def _evaluate_forcing(f, tab_v: Tabulation, t: float | None = None):
    """Forcing values (E, Q, 2) from a callable f(x, y[, t]) or an array."""
    if f is None:
        return np.zeros(tab_v.xq.shape)
    if callable(f):
        x, y = tab_v.xq[..., 0], tab_v.xq[..., 1]
        out = f(x, y) if t is None else f(x, y, t)
        if isinstance(out, (tuple, list)):
            # Component pair (f_x, f_y), each broadcastable against x.
            out = np.stack([np.broadcast_to(np.asarray(c, dtype=float),
                                            x.shape) for c in out], axis=-1)
        return np.broadcast_to(np.asarray(out, dtype=float), tab_v.xq.shape)
    return np.broadcast_to(np.asarray(f, dtype=float), tab_v.xq.shape)


# ---------------------------------------------------------------------------
# Linear (fixed advection) kernel
# ---------------------------------------------------------------------------

def oseen_batch(space: MixedSpace, rule: QuadratureRule,
                params: FlowParameters, f=None,
                tau: StabEval | None = None):
    """Element matrices/vectors of the stabilized fixed-advection problem.

    Block content, with a the advecting field, u/p trial, v/q test, and p2
    the stabilization pressure:

        (a.grad u, v) + (2 nu sym grad u, sym grad v) - (div v, p)
        + (div u, q)
        + (a.grad u - div(2 nu sym grad u) + grad p2,
           tau_m (a.grad v + grad q2))
        + (tau_c div u, div v)

    and load (f, v + tau_m (a.grad v + grad q2)).  The q-row carries only
    the divergence constraint and the (q, p2) block vanishes; strong
    second derivatives are element-wise.  With tau_m = tau_c = 0 the
    Galerkin blocks remain and the p2 rows/columns are zero.

    Returns (A (E, nl, nl), b (E, nl)).
    """
    if params.advection is None:
        raise ValueError("fixed-advection kernel needs params.advection")
    a = params.advection
    tab_v, tab_q = mixed_tabulations(space, rule)
    if tau is None:
        tau = tau_oseen(params, space.velocity.mesh.h)

    N, D, H = tab_v.N, tab_v.grad, tab_v.hess
    Nq, Dq = tab_q.N, tab_q.grad
    w = tab_v.w
    E, Q, nv = N.shape
    nq = Nq.shape[2]
    nl = 2 * nv + 2 * nq
    nu = params.nu

    wtm = w * _as_eq(tau.tau_m, E, Q)
    wtc = w * _as_eq(tau.tau_c, E, Q)

    adv = np.einsum("d,eqid->eqi", a, D)              # a . grad N_i
    lap = np.einsum("eqicc->eqi", H)
    strong = adv - nu * lap                           # same-component strong op

    A = np.zeros((E, nl, nl))
    b = np.zeros((E, nl))
    sv = [slice(0, nv), slice(nv, 2 * nv)]
    sp = slice(2 * nv, 2 * nv + nq)
    sp2 = slice(2 * nv + nq, nl)

    # Galerkin advection + same-component stabilization cross term
    diag = (np.einsum("eq,eqi,eqj->eij", w, N, adv)
            + np.einsum("eq,eqi,eqj->eij", wtm, adv, strong))
    # viscous block, grad-div penalty, and mixed-derivative stabilization
    base = nu * np.einsum("eq,eqid,eqjd->eij", w, D, D)
    cross = nu * np.einsum("eq,eqja,eqib->eabij", w, D, D)
    graddiv = np.einsum("eq,eqia,eqjb->eabij", wtc, D, D)
    stab_hess = -nu * np.einsum("eq,eqi,eqjab->eabij", wtm, adv, H)
    for ai in range(2):
        for bi in range(2):
            blk = cross[:, ai, bi] + graddiv[:, ai, bi] + stab_hess[:, ai, bi]
            if ai == bi:
                blk = blk + diag + base
            A[:, sv[ai], sv[bi]] = blk

    # pressure coupling: -(div v, p) and +(div u, q)
    B = np.einsum("eq,eqia,eqm->eaim", w, D, Nq)
    for ai in range(2):
        A[:, sv[ai], sp] = -B[:, ai]
        A[:, sp, sv[ai]] = np.swapaxes(B[:, ai], 1, 2)

    # stabilization couplings with the second pressure
    Svp2 = np.einsum("eq,eqi,eqma->eaim", wtm, adv, Dq)
    Sq2v = (np.einsum("eq,eqmb,eqj->ebmj", wtm, Dq, strong)
            - nu * np.einsum("eq,eqma,eqjab->ebmj", wtm, Dq, H))
    for ai in range(2):
        A[:, sv[ai], sp2] = Svp2[:, ai]
        A[:, sp2, sv[ai]] = Sq2v[:, ai]
    A[:, sp2, sp2] = np.einsum("eq,eqma,eqna->emn", wtm, Dq, Dq)

    fv = _evaluate_forcing(f, tab_v)
    for ai in range(2):
        b[:, sv[ai]] = (np.einsum("eq,eqi->ei", w * fv[..., ai], N)
                        + np.einsum("eq,eqi->ei", wtm * fv[..., ai], adv))
    b[:, sp2] = np.einsum("eq,eqa,eqma->em", wtm, fv, Dq)
    return A, b


def element_oseen(element: int, space: MixedSpace, rule: QuadratureRule,
                  params: FlowParameters, f=None,
                  tau: StabEval | None = None) -> ElementContribution:
    """Single-element view of ``oseen_batch`` (testing convenience)."""
    A, b = oseen_batch(space, rule, params, f=f, tau=tau)
    return ElementContribution(matrix=A[element], vector=b[element])


def galerkin_batch(space: MixedSpace, rule: QuadratureRule,
                   params: FlowParameters, f=None):
    """Plain Galerkin limit: same blocks with both taus switched off."""
    zero = StabEval(tau_m=0.0, tau_c=0.0, variant="sharp")
    return oseen_batch(space, rule, params, f=f, tau=zero)


# ---------------------------------------------------------------------------
# Fine-scale closures
# ---------------------------------------------------------------------------

def subscale_quasistatic(tau_m, r_m, gp2):
    """Algebraic fine-scale closure u' = -tau_m (grad p2 + r_m), pointwise.

    ``tau_m`` broadcasts against the leading axes of r_m (..., 2)."""
    tau_m = np.asarray(tau_m, dtype=float)
    return -tau_m[..., None] * (np.asarray(gp2, dtype=float)
                                + np.asarray(r_m, dtype=float))


def subscale_update_dynamic(tau_m, dt, gu_mid, r_m_mid, gp2, s_prev):
    """Midpoint update of the tracked fine-scale velocity.

    Solves, per quadrature point, the 2x2 system

        M s_n = -r_m_mid - grad p2 + ((1/dt - 1/(2 tau))I - gu_mid/2) s_prev
        M     = (1/dt + 1/(2 tau))I + gu_mid/2

    where gu_mid[a, d] = d_d u_a of the midpoint coarse velocity, so that
    gu_mid @ s = (s . grad) u.  Returns (s_n, M_inv).
    Raises if any pointwise M is singular.
    """
    tau_m = np.asarray(tau_m, dtype=float)
    gu_mid = np.asarray(gu_mid, dtype=float)
    eye = np.eye(2)
    cplus = (1.0 / dt + 0.5 / tau_m)[..., None, None] * eye
    cminus = (1.0 / dt - 0.5 / tau_m)[..., None, None] * eye
    M = cplus + 0.5 * gu_mid
    det = M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]
    if np.any(np.abs(det) < 1e-300):
        raise FloatingPointError("singular fine-scale update matrix; "
                                 "reduce dt or revisit tau")
    Minv = np.empty_like(M)
    Minv[..., 0, 0] = M[..., 1, 1]
    Minv[..., 1, 1] = M[..., 0, 0]
    Minv[..., 0, 1] = -M[..., 0, 1]
    Minv[..., 1, 0] = -M[..., 1, 0]
    Minv = Minv / det[..., None, None]
    rhs = (-np.asarray(r_m_mid, dtype=float) - np.asarray(gp2, dtype=float)
           + np.einsum("...ab,...b->...a", cminus - 0.5 * gu_mid,
                       np.asarray(s_prev, dtype=float)))
    s_n = np.einsum("...ab,...b->...a", Minv, rhs)
    return s_n, Minv


# ---------------------------------------------------------------------------
# Nonlinear kernels
# ---------------------------------------------------------------------------

def _velocity_trial_ops(tab_v: Tabulation, u, gu, nu):
    """Trial-side operators for velocity perturbations du, flattened over
    J = comp * nv + j.

    Returns (valT, rmT, divT, gradT):
      valT  (E, Q, 2, 2nv)     components of du
      rmT   (E, Q, 2, 2nv)     du.grad u + u.grad du - nu(lap du + grad div du)
      divT  (E, Q, 2nv)        div du
      gradT (E, Q, 2, 2, 2nv)  gradT[a, d] = d_d (du)_a
    """
    N, D, H = tab_v.N, tab_v.grad, tab_v.hess
    E, Q, nv = N.shape
    lap = np.einsum("eqicc->eqi", H)
    uD = np.einsum("eqd,eqid->eqi", u, D)             # u . grad N_j

    valT = np.zeros((E, Q, 2, 2 * nv))
    rmT = np.zeros((E, Q, 2, 2 * nv))
    divT = np.zeros((E, Q, 2 * nv))
    gradT = np.zeros((E, Q, 2, 2, 2 * nv))
    for b in range(2):
        cols = slice(b * nv, (b + 1) * nv)
        valT[:, :, b, cols] = N
        divT[:, :, cols] = D[..., b]
        rmT[:, :, b, cols] += uD - nu * lap
        for a in range(2):
            rmT[:, :, a, cols] += gu[:, :, a, b, None] * N
            rmT[:, :, a, cols] -= nu * H[:, :, :, a, b]
            gradT[:, :, b, a, cols] = D[..., a]
    return valT, rmT, divT, gradT


def _momentum_rows(wq, tab_v, nu, u, gu, s, p, div_u, tau_c, fv,
                   dt_u=None, dt_s=None):
    """Residual of the coarse momentum equation, rows (a, i) flattened.

    Terms: optional time derivatives of the coarse and fine velocities,
    skew self-advection of u, skew fine-coarse and conservative
    coarse-fine/fine-fine advection with the fine velocity s, viscous
    stress, pressure, grad-div penalty, minus forcing.
    """
    N, D = tab_v.N, tab_v.grad
    E, Q, nv = N.shape
    uD = np.einsum("eqd,eqid->eqi", u, D)             # u . grad N_i
    sD = np.einsum("eqd,eqid->eqi", s, D)             # s . grad N_i
    u_gu = np.einsum("eqad,eqd->eqa", gu, u)          # (u.grad)u
    s_gu = np.einsum("eqad,eqd->eqa", gu, s)          # (s.grad)u
    wtc = wq * _as_eq(tau_c, E, Q)

    r = np.zeros((E, 2, nv))
    for a in range(2):
        point = 0.5 * (u_gu[..., a] + s_gu[..., a]) - fv[..., a]
        if dt_u is not None:
            point = point + dt_u[..., a]
        if dt_s is not None:
            point = point + dt_s[..., a]
        r[:, a] += np.einsum("eq,eqi->ei", wq * point, N)
        # adjoint halves of the skew forms plus conservative fine terms
        r[:, a] -= np.einsum("eq,eqi->ei",
                             wq * (0.5 * u[..., a] + s[..., a]), uD + sD)
        # viscous: nu (grad u_a . grad N_i + sum_b d_a u_b d_b N_i)
        r[:, a] += nu * np.einsum("eq,eqd,eqid->ei", wq, gu[:, :, a, :], D)
        r[:, a] += nu * np.einsum("eq,eqb,eqib->ei", wq, gu[:, :, :, a], D)
        r[:, a] -= np.einsum("eq,eqi->ei", wq * p, D[..., a])
        r[:, a] += np.einsum("eq,eqi->ei", wtc * div_u, D[..., a])
    return r.reshape(E, 2 * nv)


def _nonlinear_jacobian(tab_v, tab_q, nu, wq, u, gu, s,
                        ds_v, ds_p, ds_p2, tau_c, coarse_scale=1.0,
                        advecting_slot=True):
    """Jacobian blocks shared by the steady and midpoint kernels.

    ``ds_*`` hold the derivative of the fine-scale velocity entering the
    advective terms with respect to each unknown family, shaped
    (E, Q, 2, ncols); they already include any chain factors; None drops
    the family.  ``coarse_scale`` multiplies derivatives taken through the
    coarse velocity (1/2 when the advective state is a midpoint average of
    the unknown, 1 for steady).  ``advecting_slot=False`` drops the
    derivatives through the advecting velocity (the Picard matrix).
    """
    N, D = tab_v.N, tab_v.grad
    Nq, Dq = tab_q.N, tab_q.grad
    E, Q, nv = N.shape
    nq = Nq.shape[2]
    nl = 2 * nv + 2 * nq

    valT, _, divT, gradT = _velocity_trial_ops(tab_v, u, gu, nu)
    uD = np.einsum("eqd,eqid->eqi", u, D)
    sD = np.einsum("eqd,eqid->eqi", s, D)

    J = np.zeros((E, nl, nl))
    sv = [slice(0, nv), slice(nv, 2 * nv)]
    svv = slice(0, 2 * nv)
    sp = slice(2 * nv, 2 * nv + nq)
    sp2 = slice(2 * nv + nq, nl)

    # --- momentum rows, direct coarse-velocity dependence ---------------
    duDi = np.einsum("eqid,eqdJ->eqiJ", D, valT)      # du . grad N_i
    du_grad_u = np.einsum("eqad,eqdJ->eqaJ", gu, valT)
    u_grad_du = np.einsum("eqd,eqadJ->eqaJ", u, gradT)
    s_grad_du = np.einsum("eqd,eqadJ->eqaJ", s, gradT)
    rowsT = np.zeros((E, Q, 2, nv, 2 * nv))
    for a in range(2):
        # skew u-u: 1/2 (du.grad u + u.grad du, v) - 1/2 (u, du.grad v)
        #           - 1/2 (du, u.grad v)
        # skew s-u: 1/2 (s.grad du, v) - 1/2 (du, s.grad v)
        # conservative u-s and s-s with du advecting: -(s, du.grad v)
        rowsT[:, :, a] += 0.5 * N[..., None] * (
            u_grad_du[:, :, a, None, :] + s_grad_du[:, :, a, None, :])
        rowsT[:, :, a] -= 0.5 * (uD + sD)[..., None] * valT[:, :, a, None, :]
        if advecting_slot:
            rowsT[:, :, a] += 0.5 * N[..., None] * du_grad_u[:, :, a, None, :]
            rowsT[:, :, a] -= (0.5 * u[:, :, a, None, None]
                               + s[:, :, a, None, None]) * duDi
    J[:, svv, svv] += coarse_scale * np.einsum(
        "eq,eqaiJ->eaiJ", wq, rowsT).reshape(E, 2 * nv, 2 * nv)

    base = nu * np.einsum("eq,eqid,eqjd->eij", wq, D, D)
    cross = nu * np.einsum("eq,eqja,eqib->eabij", wq, D, D)
    wtc = wq * _as_eq(tau_c, E, Q)
    graddiv = np.einsum("eq,eqia,eqjb->eabij", wtc, D, D)
    for a in range(2):
        for b in range(2):
            blk = cross[:, a, b] + graddiv[:, a, b]
            if a == b:
                blk = blk + base
            J[:, sv[a], sv[b]] += coarse_scale * blk

    # --- momentum rows, dependence through the fine-scale velocity ------
    # W[a, i, c] multiplies ds_c in momentum row (a, i)
    W = np.zeros((E, Q, 2, nv, 2))
    for a in range(2):
        W[:, :, a, :, a] -= uD + sD
        for c in range(2):
            W[:, :, a, :, c] += (0.5 * N * gu[:, :, a, c, None]
                                 - 0.5 * u[:, :, a, None] * D[..., c]
                                 - s[:, :, a, None] * D[..., c])
    for cols, ds in ((svv, ds_v), (sp, ds_p), (sp2, ds_p2)):
        if ds is None:
            continue
        blk = np.einsum("eq,eqaic,eqcJ->eaiJ", wq, W, ds)
        J[:, svv, cols] += blk.reshape(E, 2 * nv, -1)

    # --- coarse pressure rows and the pressure column --------------------
    J[:, sp, svv] += coarse_scale * np.einsum("eq,eqm,eqJ->emJ",
                                              wq, Nq, divT)
    B = np.einsum("eq,eqia,eqm->eaim", wq, D, Nq)
    for a in range(2):
        J[:, sv[a], sp] += -B[:, a]

    # --- fine pressure rows: -(grad q2, ds) ------------------------------
    for cols, ds in ((svv, ds_v), (sp, ds_p), (sp2, ds_p2)):
        if ds is None:
            continue
        J[:, sp2, cols] += -np.einsum("eq,eqmc,eqcJ->emJ", wq, Dq, ds)
    return J


def ns_steady_batch(space: MixedSpace, rule: QuadratureRule,
                    params: FlowParameters, current: np.ndarray, f=None,
                    tau: StabEval | None = None,
                    linearization: str = "newton",
                    jacobian: bool = True):
    """Residual and consistent linearization of the steady nonlinear problem.

    The coarse equation uses skew advection for the coarse velocity,
    conservative/skew advective couplings with the algebraic fine-scale
    velocity s = -tau_m (grad p2 + r_m), the grad-div penalty, and the
    fine-scale continuity rows -(grad q2, s), where r_m is the strong
    momentum residual u.grad u - div(2 nu sym grad u) + grad p - f.

    ``tau`` defaults to the smoothed steady form evaluated at the current
    velocity; it is frozen in the linearization (defect correction in tau,
    consistent in all advective/fine-scale paths).  ``linearization``
    "picard" swaps the consistent Jacobian for the fixed-advection matrix
    (advecting-slot and subscale-velocity derivatives dropped), useful to
    start the nonlinear iteration far from the solution.  ``jacobian``
    False returns J = None (residual pricing without linearization cost).

    Returns (R (E, nl), J (E, nl, nl), tau).
    """
    if linearization not in ("newton", "picard"):
        raise ValueError(f"unknown linearization {linearization!r}")
    tab_v, tab_q = mixed_tabulations(space, rule)
    u_loc, p_loc, p2_loc = local_coefficients(space, current)
    u, gu, div_u, lap, gdiv, p, gp, p2, gp2 = _fields(
        tab_v, tab_q, u_loc, p_loc, p2_loc)
    wq = tab_v.w
    E, Q, nv = tab_v.N.shape
    nq = tab_q.N.shape[2]
    nu = params.nu

    if tau is None:
        tau = tau_smoothed(u, tab_v.metric[:, None, :, :], params)
    tau_m = _as_eq(tau.tau_m, E, Q)

    fv = _evaluate_forcing(f, tab_v)
    u_gu = np.einsum("eqad,eqd->eqa", gu, u)
    r_m = u_gu - nu * (lap + gdiv) + gp - fv
    s = subscale_quasistatic(tau_m, r_m, gp2)

    nl = 2 * nv + 2 * nq
    R = np.zeros((E, nl))
    R[:, :2 * nv] = _momentum_rows(wq, tab_v, nu, u, gu, s, p, div_u,
                                   tau.tau_c, fv)
    R[:, 2 * nv:2 * nv + nq] = np.einsum("eq,eqm->em", wq * div_u, tab_q.N)
    R[:, 2 * nv + nq:] = -np.einsum("eq,eqma,eqa->em", wq, tab_q.grad, s)
    if not jacobian:
        return R, None, tau

    newton = linearization == "newton"
    _, rmT, _, _ = _velocity_trial_ops(tab_v, u, gu, nu)
    dgp = np.swapaxes(tab_q.grad, 2, 3)               # (E, Q, 2, nq)
    ds_v = -tau_m[..., None, None] * rmT if newton else None
    ds_p = -tau_m[..., None, None] * dgp
    ds_p2 = ds_p.copy()

    J = _nonlinear_jacobian(tab_v, tab_q, nu, wq, u, gu, s,
                            ds_v, ds_p, ds_p2, tau.tau_c,
                            advecting_slot=newton)
    return R, J, tau


def element_ns_steady(element: int, space: MixedSpace, rule: QuadratureRule,
                      params: FlowParameters, current: np.ndarray, f=None,
                      tau: StabEval | None = None) -> ElementContribution:
    """Single-element view of ``ns_steady_batch``: matrix = Jacobian block,
    vector = residual block."""
    R, J, _ = ns_steady_batch(space, rule, params, current, f=f, tau=tau)
    return ElementContribution(matrix=J[element], vector=R[element])


def ns_midpoint_batch(space: MixedSpace, rule: QuadratureRule,
                      params: FlowParameters, current: np.ndarray,
                      previous: np.ndarray, s_prev: np.ndarray, dt: float,
                      f=None, t_mid: float | None = None,
                      model: str = "dynamic",
                      tau: StabEval | None = None,
                      linearization: str = "newton",
                      jacobian: bool = True):
    """Residual/Jacobian of one implicit-midpoint step of the coarse
    equation, plus the updated fine-scale samples.

    ``current`` holds the end-of-step unknowns (u_n, p, p2); ``previous``
    the converged start-of-step coefficients; ``s_prev`` the fine-scale
    velocity samples at quadrature points, shape (E, Q, 2) (ignored by the
    quasi-static model).  Advective/viscous terms are evaluated at the
    midpoint velocity u_mid = (u_n + u_prev)/2, and the strong residual is

        r_m = (u_n - u_prev)/dt + u_mid.grad u_mid
              - div(2 nu sym grad u_mid) + grad p - f(t_mid).

    model "dynamic": s_n from ``subscale_update_dynamic`` with the steady
    smoothed tau; the coarse equation sees s_mid = (s_n + s_prev)/2 plus
    the relaxation term ((s_n - s_prev)/dt, v).  model "quasistatic":
    s_mid = -tau_m (grad p2 + r_m) with the dt-augmented smoothed tau, no
    relaxation term, and s_n = s_mid is reported.  ``jacobian`` False
    skips the linearization and returns J = None.

    Returns (R (E, nl), J (E, nl, nl), s_n (E, Q, 2), tau).
    """
    if model not in ("dynamic", "quasistatic"):
        raise ValueError(f"unknown subscale model {model!r}")
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if linearization not in ("newton", "picard"):
        raise ValueError(f"unknown linearization {linearization!r}")
    newton = linearization == "newton"
    tab_v, tab_q = mixed_tabulations(space, rule)
    E, Q, nv = tab_v.N.shape
    nq = tab_q.N.shape[2]
    nu = params.nu
    wq = tab_v.w

    un_loc, p_loc, p2_loc = local_coefficients(space, current)
    up_loc, _, _ = local_coefficients(space, previous)
    um_loc = 0.5 * (un_loc + up_loc)
    u, gu, div_u, lap, gdiv, p, gp, p2, gp2 = _fields(
        tab_v, tab_q, um_loc, p_loc, p2_loc)
    dt_u = np.einsum("eqi,eai->eqa", tab_v.N, (un_loc - up_loc) / dt)

    if tau is None:
        G = tab_v.metric[:, None, :, :]
        tau = (tau_smoothed(u, G, params) if model == "dynamic"
               else tau_smoothed(u, G, params, dt=dt))
    tau_m = _as_eq(tau.tau_m, E, Q)

    fv = _evaluate_forcing(f, tab_v, t=t_mid)
    u_gu = np.einsum("eqad,eqd->eqa", gu, u)
    r_m = dt_u + u_gu - nu * (lap + gdiv) + gp - fv

    if model == "dynamic":
        s_n, Minv = subscale_update_dynamic(tau_m, dt, gu, r_m, gp2, s_prev)
        s_mid = 0.5 * (s_n + s_prev)
        dt_s = (s_n - s_prev) / dt
    else:
        s_mid = subscale_quasistatic(tau_m, r_m, gp2)
        s_n = s_mid
        dt_s = None

    nl = 2 * nv + 2 * nq
    R = np.zeros((E, nl))
    R[:, :2 * nv] = _momentum_rows(wq, tab_v, nu, u, gu, s_mid, p, div_u,
                                   tau.tau_c, fv, dt_u=dt_u, dt_s=dt_s)
    R[:, 2 * nv:2 * nv + nq] = np.einsum("eq,eqm->em", wq * div_u, tab_q.N)
    R[:, 2 * nv + nq:] = -np.einsum("eq,eqma,eqa->em", wq, tab_q.grad, s_mid)
    if not jacobian:
        return R, None, s_n, tau

    valT, rmT, _, gradT = _velocity_trial_ops(tab_v, u, gu, nu)
    # d(r_m)/d(u_n): time term at full weight, midpoint terms halved
    drm_v = valT / dt + 0.5 * rmT
    dgp = np.swapaxes(tab_q.grad, 2, 3)

    if model == "dynamic":
        if newton:
            # the update matrix and its right-hand side both carry the
            # midpoint velocity gradient; together they contribute
            # -(d gu) s_mid
            dgu_s = 0.5 * np.einsum("eqadJ,eqd->eqaJ", gradT, s_mid)
            dsn_v = -np.einsum("eqab,eqbJ->eqaJ", Minv, drm_v + dgu_s)
        else:
            dsn_v = None
        dsn_p = -np.einsum("eqab,eqbJ->eqaJ", Minv, dgp)
        dsn_p2 = dsn_p.copy()
        ds_v = 0.5 * dsn_v if newton else None
        ds_p, ds_p2 = 0.5 * dsn_p, 0.5 * dsn_p2
    else:
        dsn_v = -tau_m[..., None, None] * drm_v if newton else None
        dsn_p = -tau_m[..., None, None] * dgp
        dsn_p2 = dsn_p.copy()
        ds_v, ds_p, ds_p2 = dsn_v, dsn_p, dsn_p2

    J = _nonlinear_jacobian(tab_v, tab_q, nu, wq, u, gu, s_mid,
                            ds_v, ds_p, ds_p2, tau.tau_c, coarse_scale=0.5,
                            advecting_slot=newton)
    # time derivative of the coarse velocity
    mass = np.einsum("eq,eqi,eqj->eij", wq, tab_v.N, tab_v.N) / dt
    for a in range(2):
        svr = slice(a * nv, (a + 1) * nv)
        J[:, svr, svr] += mass
    if model == "dynamic":
        # relaxation rows ((s_n - s_prev)/dt, v) against all families
        svv = slice(0, 2 * nv)
        for cols, dsn in ((svv, dsn_v),
                          (slice(2 * nv, 2 * nv + nq), dsn_p),
                          (slice(2 * nv + nq, nl), dsn_p2)):
            if dsn is None:
                continue
            blk = np.einsum("eq,eqi,eqaJ->eaiJ", wq / dt, tab_v.N, dsn)
            J[:, svv, cols] += blk.reshape(E, 2 * nv, -1)
    return R, J, s_n, tau


def element_ns_midpoint(element: int, space: MixedSpace,
                        rule: QuadratureRule, params: FlowParameters,
                        current: np.ndarray, previous: np.ndarray,
                        s_prev: np.ndarray, dt: float, f=None,
                        t_mid: float | None = None,
                        model: str = "dynamic"):
    """Single-element view of ``ns_midpoint_batch``: returns the element
    contribution and that element's updated fine-scale samples."""
    R, J, s_n, _ = ns_midpoint_batch(space, rule, params, current, previous,
                                     s_prev, dt, f=f, t_mid=t_mid,
                                     model=model)
    return (ElementContribution(matrix=J[element], vector=R[element]),
            s_n[element])


# ---------------------------------------------------------------------------
# Error norms
# ---------------------------------------------------------------------------

@dataclass
class ExactFields:
    """Exact-solution samples on the quadrature layout (E, Q, ...).

    ``visc_div`` is div(2 nu sym grad u) = nu (lap u + grad div u); it and
    ``grad_p`` may be None, dropping the corresponding strong terms from
    the stabilization-weighted norm.
    """

    u: np.ndarray
    grad_u: np.ndarray
    p: np.ndarray
    grad_p: np.ndarray | None = None
    visc_div: np.ndarray | None = None


def error_norms_batch(space: MixedSpace, rule: QuadratureRule,
                      exact: ExactFields, solution: np.ndarray,
                      params: FlowParameters, h: float | None = None):
    """Per-element squared error contributions.

    Returns a dict of (E,) arrays: 'h1_semi_u' = |grad e_u|^2, 'l2_u',
    'l2_p', and 'stab', the stabilization-weighted norm

        2 nu |sym grad e_u|^2 + alpha e_p^2 + tau_c (div e_u)^2
        + tau_m |a.grad e_u + grad e_p2|^2 + tau_m |div(2 nu sym grad e_u)|^2

    with the mesh-size tau pair, alpha = ``pressure_error_weight``, and the
    exact pressure as the reference for the second pressure field.  The
    advecting field a comes from params (zero if unset).
    """
    tab_v, tab_q = mixed_tabulations(space, rule)
    u_loc, p_loc, p2_loc = local_coefficients(space, solution)
    u, gu, div_u, lap, gdiv, p, gp, p2, gp2 = _fields(
        tab_v, tab_q, u_loc, p_loc, p2_loc)
    wq = tab_v.w
    nu = params.nu
    if h is None:
        h = space.velocity.mesh.h

    e_u = exact.u - u
    e_gu = exact.grad_u - gu
    e_p = exact.p - p
    out = {
        "h1_semi_u": np.einsum("eq,eqad->e", wq, e_gu ** 2),
        "l2_u": np.einsum("eq,eqa->e", wq, e_u ** 2),
        "l2_p": np.einsum("eq,eq->e", wq, e_p ** 2),
    }

    a = params.advection if params.advection is not None else np.zeros(2)
    tau = tau_oseen(params, h)
    alpha = pressure_error_weight(params, h)
    sym = 0.5 * (e_gu + np.swapaxes(e_gu, 2, 3))
    e_div = e_gu[..., 0, 0] + e_gu[..., 1, 1]
    stab = (2 * nu * np.einsum("eqad,eqad->eq", sym, sym)
            + alpha * e_p ** 2 + tau.tau_c * e_div ** 2)
    cross = np.einsum("d,eqad->eqa", a, e_gu)
    if exact.grad_p is not None:
        cross = cross + (exact.grad_p - gp2)
    stab = stab + tau.tau_m * np.einsum("eqa,eqa->eq", cross, cross)
    if exact.visc_div is not None:
        e_visc = exact.visc_div - nu * (lap + gdiv)
        stab = stab + tau.tau_m * np.einsum("eqa,eqa->eq", e_visc, e_visc)
    out["stab"] = np.einsum("eq,eq->e", wq, stab)
    return out


def error_norm_terms(element: int, space: MixedSpace, rule: QuadratureRule,
                     exact: ExactFields, solution: np.ndarray,
                     params: FlowParameters, h: float | None = None):
    """Single-element view of ``error_norms_batch``."""
    batch = error_norms_batch(space, rule, exact, solution, params, h=h)
    return {k: v[element] for k, v in batch.items()}
