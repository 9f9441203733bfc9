"""Incompressible surface flow time stepper.

Chorin-type fragmented scheme on a Lagrangian point cloud: after the
movement and regularization phases, an intermediate velocity is solved
semi-implicitly (the projected componentwise Laplacian is implicit, the
rotational remainder of the viscous term explicit), projected onto the
tangent planes, and corrected by a pressure Poisson solve.  Boundary
rows replace momentum/Poisson rows point by point according to labels.
"""

from dataclasses import dataclass, field
from itertools import permutations
from typing import Callable, Optional

import numpy as np

from .cloud import Label, PointCloud, estimate_normals, is_boundary, is_fixed
from .errors import MissingBoundaryData
from .operators import StencilSet, projector
from .sparse import SparseSystem, solve_bicgstab
from .tessellation import build_geometry
from .transport import (DualCloud, MotionState, advance_positions,
                        regularize)


@dataclass
class FluidParams:
    rho: float = 1.0
    eta: float = 0.0
    g: Optional[Callable] = None        # (x (N,3), t) -> (N,3)


@dataclass
class BoundaryData:
    """Analytic boundary closures; every entry optional (zero default).

    v_dirichlet(x, t) -> (N,3); p_dirichlet(x, t) -> (N,);
    p_neumann(x, t, nu) -> (N,) directional derivative of p along nu;
    v_neumann(x, t, nu) -> (N,3) directional derivative of v along nu.
    """
    v_dirichlet: Optional[Callable] = None
    p_dirichlet: Optional[Callable] = None
    p_neumann: Optional[Callable] = None
    v_neumann: Optional[Callable] = None


@dataclass
class StepReport:
    tangency_residual: float = 0.0
    divergence_residual: float = 0.0
    div_before: float = 0.0
    div_after: float = 0.0
    velocity_iterations: int = 0
    pressure_iterations: int = 0
    points_merged: int = 0
    points_inserted: int = 0
    points_deleted: int = 0


def stress_tensor(cov_grad, eta):
    """Viscous surface stress S = eta (G + G^T) for covariant gradient G."""
    cov_grad = np.asarray(cov_grad, dtype=float)
    return eta * (cov_grad + np.swapaxes(cov_grad, -1, -2))


def viscous_terms(cloud: PointCloud, st: StencilSet, v, params: FluidParams):
    """Explicit remainder of the viscous split: (1/rho) P div S - (eta/rho) P lap v.

    The implicit part, (eta/rho) P lap v*, is assembled directly into the
    system by intermediate_velocity; only the remainder is evaluated here.
    """
    N = len(cloud)
    if params.eta == 0.0:
        return np.zeros((N, 3))
    P = projector(cloud.n)
    G = st.directional_vector_gradient(v)
    cov = P @ G @ P
    S = stress_tensor(cov, params.eta)
    divS = st.divergence_of_tensor(S)
    lap = np.column_stack([st.apply_laplacian(v[:, k]) for k in range(3)])
    return (np.einsum("iab,ib->ia", P, divS)
            - params.eta * np.einsum("iab,ib->ia", P, lap)) / params.rho


def _boundary_tangent(n, nu):
    t = np.cross(n, nu)
    nt = np.linalg.norm(t)
    if nt < 1e-12:
        raise MissingBoundaryData("conormal parallel to normal")
    return t / nt


def _stress_row_coeffs(c, d, nu, eta):
    """Coefficient block (K, 3) of the scalar equation d^T S(v) nu = rhs.

    c is the (K, 3) gradient stencil at the point; entry [j, k] multiplies
    the unknown v_{j,k}.
    """
    cnu = c @ nu
    cd = c @ d
    return eta * (cnu[:, None] * d[None, :] + cd[:, None] * nu[None, :])


def _directional_row_coeffs(c, d, nu):
    """Coefficients of d . (dv/dnu) = rhs (eta = 0 fallback for stress rows)."""
    cnu = c @ nu
    return cnu[:, None] * d[None, :]


def _assign_slots(rows):
    """Permute three local equations so each lands on the component slot
    where its center coefficient is largest (helps the Jacobi diagonal)."""
    best, best_score = None, -1.0
    for perm in permutations(range(3)):
        score = 1.0
        for slot, r in enumerate(perm):
            score *= abs(rows[r][0][0, slot]) + 1e-12
        if score > best_score:
            best, best_score = perm, score
    return [rows[r] for r in best]


def _velocity_boundary_rows(cloud, st, i, params, dt, t_new, bc):
    """Three (coeffs (K,3), rhs) equations replacing point i's momentum rows."""
    lab = cloud.label[i]
    K = st.nbr.shape[1]
    c = st.c_grad[i]
    n_i = cloud.n[i]
    eta = params.eta

    def identity_rows():
        vals = np.zeros(3)
        if bc is not None and bc.v_dirichlet is not None:
            vals = np.asarray(bc.v_dirichlet(cloud.x[i:i + 1], t_new))[0]
        out = []
        for a in range(3):
            co = np.zeros((K, 3))
            co[0, a] = 1.0
            out.append((co, vals[a]))
        return out

    if lab in (Label.DIRICHLET, Label.INFLOW):
        return identity_rows()

    if lab == Label.OUTFLOW:
        nu = cloud.nu[i]
        r = np.zeros(3)
        if bc is not None and bc.v_neumann is not None:
            r = np.asarray(bc.v_neumann(cloud.x[i:i + 1], t_new,
                                        nu[None, :]))[0]
        out = []
        for a in range(3):
            co = np.zeros((K, 3))
            co[:, a] = c @ nu
            out.append((co, r[a]))
        return out

    nu = cloud.nu[i]
    if not np.isfinite(nu).all():
        raise MissingBoundaryData(f"point {i} has no conormal")
    t_b = _boundary_tangent(n_i, nu)
    normal_row = (np.zeros((K, 3)), 0.0)
    normal_row[0][0, :] = n_i

    if lab == Label.SLIP:
        nu_row = (np.zeros((K, 3)), 0.0)
        nu_row[0][0, :] = nu
        if eta > 0.0:
            row_t = (_stress_row_coeffs(c, t_b, nu, eta), 0.0)
        else:
            row_t = (_directional_row_coeffs(c, t_b, nu), 0.0)
        return _assign_slots([nu_row, row_t, normal_row])

    raise MissingBoundaryData(f"unhandled boundary label {lab} at point {i}")


def intermediate_velocity(cloud: PointCloud, st: StencilSet,
                          params: FluidParams, dt: float, t_new: float,
                          bc: Optional[BoundaryData] = None,
                          tol: float = 1e-9):
    """Solve the coupled 3N system for the intermediate velocity v*."""
    N = len(cloud)
    K = st.nbr.shape[1]
    rho, eta = params.rho, params.eta

    expl = viscous_terms(cloud, st, cloud.v, params)
    grad_p = st.apply_gradient(cloud.p)
    rhs = cloud.v / dt + expl - grad_p / rho
    if params.g is not None:
        rhs = rhs + np.asarray(params.g(cloud.x, t_new))

    sysm = SparseSystem(3 * N)
    # free-boundary points carry the momentum equation itself (with their
    # one-sided stencils): the zero-stress conditions scale with eta and
    # degenerate into "no equation" at low viscosity, which makes the
    # boundary velocity essentially arbitrary; dynamically the boundary
    # material is ordinary fluid whose stress state enters through the
    # pressure boundary value instead
    bnd = is_boundary(cloud.label) & (cloud.label != Label.FREE_BOUNDARY)
    ii = np.flatnonzero(~bnd)
    valid = st.nbr >= 0
    if ii.size:
        if eta > 0.0:
            P = projector(cloud.n[ii])
            for a in range(3):
                for b in range(3):
                    vals = -(eta / rho) * P[:, a, b, None] * st.c_lap[ii]
                    vals = np.where(valid[ii], vals, 0.0)
                    rows = np.repeat(3 * ii + a, K)
                    cols = (3 * np.maximum(st.nbr[ii], 0) + b).ravel()
                    sysm.add_entries(rows, cols, vals.ravel())
        for a in range(3):
            sysm.add_entries(3 * ii + a, 3 * ii + a, np.full(ii.size, 1.0 / dt))
            sysm.b[3 * ii + a] = rhs[ii, a]

    for i in np.flatnonzero(bnd):
        rows = _velocity_boundary_rows(cloud, st, i, params, dt, t_new, bc)
        cols3 = 3 * np.maximum(st.nbr[i], 0)
        ok = st.nbr[i] >= 0
        for a, (co, r) in enumerate(rows):
            co = np.where(ok[:, None], co, 0.0)
            cols = np.concatenate([cols3, cols3 + 1, cols3 + 2])
            vals = np.concatenate([co[:, 0], co[:, 1], co[:, 2]])
            sysm.set_row(3 * i + a, cols, vals, r)

    x, iters = solve_bicgstab(sysm.matrix(), sysm.b, x0=cloud.v.ravel(),
                              tol=tol)
    return x.reshape(N, 3), iters


def tangential_projection(cloud: PointCloud, v_star):
    """v** = P v*, the tangent-plane projection of the intermediate field."""
    ndot = (v_star * cloud.n).sum(axis=1, keepdims=True)
    return v_star - ndot * cloud.n


def _free_boundary_pressure(cloud, st, i, v_ss, eta):
    """Discrete nu^T S(v**) nu at a free-boundary point."""
    nu = cloud.nu[i]
    co = _stress_row_coeffs(st.c_grad[i], nu, nu, eta)
    ok = st.nbr[i] >= 0
    vj = v_ss[np.maximum(st.nbr[i], 0)]
    return float((np.where(ok[:, None], co, 0.0) * vj).sum())


def pressure_poisson(cloud: PointCloud, st: StencilSet, v_ss,
                     params: FluidParams, dt: float, t_new: float,
                     bc: Optional[BoundaryData] = None, tol: float = 1e-9):
    """Solve (dt/rho) lap p_corr = div v** with label-dependent boundary rows."""
    N = len(cloud)
    rho, eta = params.rho, params.eta
    div = st.apply_divergence(v_ss)

    sysm = SparseSystem(N)
    valid = st.nbr >= 0
    bnd = is_boundary(cloud.label)
    ii = np.flatnonzero(~bnd)
    K = st.nbr.shape[1]
    if ii.size:
        vals = (dt / rho) * np.where(valid[ii], st.c_lap[ii], 0.0)
        sysm.add_entries(np.repeat(ii, K), np.maximum(st.nbr[ii], 0).ravel(),
                         vals.ravel())
        sysm.b[ii] = div[ii]

    has_dirichlet = False
    for i in np.flatnonzero(bnd):
        lab = cloud.label[i]
        nu = cloud.nu[i]
        ok = valid[i]
        cols = np.maximum(st.nbr[i], 0)
        if lab in (Label.INFLOW, Label.SLIP):
            # Neumann on the full pressure: directional row on p_corr with
            # the current pressure's contribution moved to the right side
            cnu = np.where(ok, st.c_grad[i] @ nu, 0.0)
            r = 0.0
            if bc is not None and bc.p_neumann is not None:
                r = float(np.asarray(bc.p_neumann(cloud.x[i:i + 1], t_new,
                                                  nu[None, :]))[0])
            r -= float((cnu * cloud.p[cols]).sum())
            sysm.set_row(i, cols, cnu, r)
        elif lab == Label.FREE_BOUNDARY:
            p_new = _free_boundary_pressure(cloud, st, i, v_ss, eta)
            sysm.set_row(i, [i], [1.0], p_new - float(cloud.p[i]))
            has_dirichlet = True
        else:   # OUTFLOW, DIRICHLET
            if bc is None or bc.p_dirichlet is None:
                p_new = 0.0
            else:
                p_new = float(np.asarray(bc.p_dirichlet(cloud.x[i:i + 1],
                                                        t_new))[0])
            sysm.set_row(i, [i], [1.0], p_new - float(cloud.p[i]))
            has_dirichlet = True

    if not has_dirichlet:
        # pure-Neumann or closed-surface system: pin the constant nullspace
        sysm.set_row(0, [0], [1.0], 0.0)

    x, iters = solve_bicgstab(sysm.matrix(), sysm.b, tol=tol)
    return x, iters


def correct(cloud: PointCloud, st: StencilSet, v_ss, p_corr, p_n,
            params: FluidParams, dt: float):
    """Velocity/pressure update from the pressure correction.

    Points whose velocity is imposed directly (Dirichlet and inflow rows)
    keep their intermediate value: one-sided boundary stencils can carry
    very large gradient coefficients, and the correction must not
    overwrite an imposed boundary value anyway.
    """
    grad_pc = st.apply_gradient(p_corr)
    v_new = v_ss - (dt / params.rho) * grad_pc
    imposed = np.isin(cloud.label, (Label.DIRICHLET, Label.INFLOW))
    v_new[imposed] = v_ss[imposed]
    slip = cloud.label == Label.SLIP
    if slip.any():
        # keep slip velocities on the boundary curve: remove the conormal
        # component the correction may have introduced
        dot = np.einsum("ij,ij->i", v_new[slip], cloud.nu[slip])
        v_new[slip] -= dot[:, None] * cloud.nu[slip]
    return v_new, p_n + p_corr


def update_conormals(cloud: PointCloud, st: StencilSet):
    """Refresh conormals of evolving boundary points from local geometry.

    The conormal is taken as the tangential direction away from the
    neighborhood centroid; fixed boundaries keep their analytic values.
    """
    evolving = np.isin(cloud.label, (Label.FREE_BOUNDARY, Label.SLIP))
    for i in np.flatnonzero(evolving):
        nbrs = st.nbr[i][st.nbr[i] >= 0]
        d = cloud.x[i] - cloud.x[nbrs].mean(axis=0)
        d -= (d @ cloud.n[i]) * cloud.n[i]
        nd = np.linalg.norm(d)
        if nd > 1e-14:
            cloud.nu[i] = d / nd


def manufactured_gravity(v_exprs, p_expr, params: FluidParams, n_exprs):
    """Body force making analytic fields an exact momentum solution.

    `v_exprs` are three sympy expressions in symbols x, y, z, t; `p_expr`
    likewise; `n_exprs` three expressions (in x, y, z) for a smooth
    extension of the unit normal.  Returns a vectorized callable
    g(points (N,3), t) -> (N,3) evaluating

        g = dv/dt + (grad_cov v) v - (1/rho) P div_M S(v) + (1/rho) grad_M p

    derived symbolically, so substituting (v, p, g) back into the
    momentum equation leaves zero residual.
    """
    import sympy as sp

    x, y, z, t = sp.symbols("x y z t")
    X = (x, y, z)
    n = sp.Matrix([sp.sympify(e) for e in n_exprs])
    P = sp.eye(3) - n * n.T
    v = sp.Matrix([sp.sympify(e) for e in v_exprs])
    grad_v = v.jacobian(X)                      # [k, l] = d v_k / d x_l
    cov = P * grad_v * P
    S = params.eta * (cov + cov.T)
    div_s = sp.zeros(3, 1)
    for k in range(3):
        jac = S[:, k].jacobian(X)               # [l, m] = d S_lk / d x_m
        div_s[k] = sum(P[l, m] * jac[l, m]
                       for l in range(3) for m in range(3))
    grad_p = P * sp.Matrix([sp.diff(sp.sympify(p_expr), s) for s in X])
    g = (sp.diff(v, t) + cov * v
         - (P * div_s) / params.rho + grad_p / params.rho)
    fns = [sp.lambdify((x, y, z, t), sp.expand(g[k]), "numpy")
           for k in range(3)]

    def g_fn(points, tt):
        points = np.asarray(points, dtype=float)
        out = np.empty((len(points), 3))
        for k in range(3):
            out[:, k] = np.broadcast_to(
                fns[k](points[:, 0], points[:, 1], points[:, 2], tt),
                len(points))
        return out

    return g_fn


def time_step(dual: DualCloud, motion: MotionState, params: FluidParams,
              dt: float, t: float, bc: Optional[BoundaryData] = None,
              w_field: Optional[Callable] = None,
              renormalize: Optional[Callable] = None,
              hook: Optional[Callable] = None,
              inserted_log: Optional[list] = None,
              solver_tol: float = 1e-9):
    """One full step: move, regularize, rebuild geometry, solve, correct.

    Returns (dual', motion', report).  `w_field(x, t)` supplies the
    surface velocity; `renormalize(cloud)` refreshes normals in place
    (estimate_normals seeded by the previous normals when omitted);
    `hook(dual) -> dual` runs after movement and before regularization
    for scenario-specific relabeling or point removal; `inserted_log`
    collects inserted positions (see transport.regularize).
    """
    report = StepReport()
    fluid = dual.fluid
    t_new = t + dt

    surface_moves = w_field is not None
    if surface_moves:
        fluid.w = np.asarray(w_field(fluid.x, t))
        if dual.background is not None:
            dual.background.w = np.asarray(w_field(dual.background.x, t))

    n_before = len(fluid)
    moved = advance_positions(dual, motion)
    if hook is not None:
        # scenario relabeling/removal must precede regularization so that
        # stray points cannot seed hole sites outside the fluid region
        moved = hook(moved)
    report.points_deleted = n_before - len(moved.fluid)
    n_before = len(moved.fluid)
    # free boundaries are re-detected only when the domain has any: on a
    # fixed-rim domain, relabeling would turn transient gaps into spurious
    # boundary points and then shield them from hole insertion
    has_free = bool(np.any(moved.fluid.label == Label.FREE_BOUNDARY))
    moved = regularize(moved, relabel=has_free, background_too=surface_moves,
                       inserted_log=inserted_log)
    report.points_merged = max(0, n_before - len(moved.fluid))
    report.points_inserted = max(0, len(moved.fluid) - n_before)
    fluid = moved.fluid

    if renormalize is not None:
        renormalize(fluid)
        if moved.background is not None and surface_moves:
            renormalize(moved.background)
    else:
        estimate_normals(fluid, reference=fluid.n)
        if moved.background is not None and surface_moves:
            estimate_normals(moved.background,
                             reference=moved.background.n)

    st = build_geometry(fluid, stencils=True)
    update_conormals(fluid, st)

    v_star, report.velocity_iterations = intermediate_velocity(
        fluid, st, params, dt, t_new, bc, tol=solver_tol)
    v_ss = tangential_projection(fluid, v_star)

    interior = ~is_boundary(fluid.label)
    div_ss = st.apply_divergence(v_ss)[interior]
    rms0 = float(np.sqrt(np.mean(div_ss**2))) if div_ss.size else 0.0

    # Iterated pressure projection.  The Laplacian stencil is not the exact
    # composition of the divergence and gradient stencils, so one correction
    # removes only part of the divergence; each pass is rescaled by the
    # least-squares factor (which can never increase the L2 divergence) and
    # further passes run only while they still pay off.  On fields whose
    # divergence already sits at the stencil consistency floor a single pass
    # barely improves anything and the loop stops immediately; on strongly
    # compressing free-boundary flow the extra passes are what keeps the
    # advected divergence from feeding back into the motion.
    v_new = v_ss
    p_new = fluid.p
    div_new = div_ss
    rms_cur = rms0
    for _ in range(4):
        fluid.p = p_new
        p_corr, piters = pressure_poisson(
            fluid, st, v_new, params, dt, t_new, bc, tol=solver_tol)
        report.pressure_iterations += piters
        v_next, p_next = correct(fluid, st, v_new, p_corr, p_new, params, dt)
        div_next = st.apply_divergence(v_next)[interior]
        dq = div_next - div_new
        qq = float(dq @ dq)
        if qq > 0.0:
            theta = min(max(-float(div_new @ dq) / qq, 0.0), 2.0)
            v_next = v_new + theta * (v_next - v_new)
            p_next = p_new + theta * (p_next - p_new)
            div_next = div_new + theta * dq
        v_new, p_new, div_new = v_next, p_next, div_next
        rms_prev, rms_cur = rms_cur, (
            float(np.sqrt(np.mean(div_new**2))) if div_new.size else 0.0)
        if rms_cur <= 0.25 * rms0 or rms_cur > 0.7 * rms_prev:
            break
    report.div_before = rms0
    report.div_after = rms_cur
    report.divergence_residual = float(np.abs(div_new).max()) if div_new.size else 0.0
    report.tangency_residual = float(np.abs((v_new * fluid.n).sum(1)).max())

    # velocities at level n on the regularized cloud become the "previous"
    # values for the next movement step
    v_level_n = fluid.v.copy()
    w_level_n = fluid.w.copy()
    fluid.v = v_new
    fluid.p = p_new
    if moved.background is not None:
        moved.background.extra["w_prev"] = moved.background.w.copy()
    motion_new = MotionState(v_prev=v_level_n, w_prev=w_level_n,
                             dt=dt, dt0=dt, first_step=False)
    return DualCloud(fluid, moved.background), motion_new, report
