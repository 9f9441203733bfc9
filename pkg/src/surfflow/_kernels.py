"""Hot per-point kernels: local tessellation and derivative stencils.

Everything in here operates on a padded neighbor table (nbr[N, K] with
counts, center first in each row) over an immutable snapshot of the cloud,
so the outer loops are embarrassingly parallel. Compiled with numba.

The "1-ring" Delaunay star around a point is computed without a global
triangulation: neighbors are projected onto the tangent plane and inverted
about the center (q -> q/|q|^2). A triangle (center, a, b) has an empty
circumcircle exactly when (a, b) is a convex-hull edge of the inverted
points with the origin on its inner side, so the star falls out of one
2-D convex hull per point.
"""

import numpy as np
from numba import njit

# flag bits reported per point
FLAG_DEGREE1 = 1        # stencil fell back to the linear basis
FLAG_SINGULAR = 2       # fatal: even degree-1 system is rank deficient
FLAG_UNSTABILIZED = 4   # Laplacian positivity correction infeasible
FLAG_DEGENERATE = 8     # projected neighborhood collinear, no tessellation

_EIG_RTOL = 1e-11


@njit(cache=True)
def _convex_hull(pts):
    """Monotone-chain convex hull, CCW order. Returns indices into pts."""
    m = pts.shape[0]
    order = np.argsort(pts[:, 0])
    # tie-break on y for equal x
    for a in range(1, m):
        b = a
        while b > 0 and pts[order[b - 1], 0] == pts[order[b], 0] and \
                pts[order[b - 1], 1] > pts[order[b], 1]:
            order[b - 1], order[b] = order[b], order[b - 1]
            b -= 1
    hull = np.empty(2 * m + 1, dtype=np.int64)
    k = 0
    for ii in range(m):          # lower chain
        p = order[ii]
        while k >= 2:
            ax, ay = pts[hull[k - 2], 0], pts[hull[k - 2], 1]
            bx, by = pts[hull[k - 1], 0], pts[hull[k - 1], 1]
            cr = (bx - ax) * (pts[p, 1] - ay) - (by - ay) * (pts[p, 0] - ax)
            if cr <= 0.0:
                k -= 1
            else:
                break
        hull[k] = p
        k += 1
    lower = k
    for ii in range(m - 2, -1, -1):  # upper chain
        p = order[ii]
        while k > lower:
            ax, ay = pts[hull[k - 2], 0], pts[hull[k - 2], 1]
            bx, by = pts[hull[k - 1], 0], pts[hull[k - 1], 1]
            cr = (bx - ax) * (pts[p, 1] - ay) - (by - ay) * (pts[p, 0] - ax)
            if cr <= 0.0:
                k -= 1
            else:
                break
        hull[k] = p
        k += 1
    return hull[:k - 1]


@njit(cache=True)
def _star_one(q, valid, prevb_local, center_prevb, rmax_h):
    """Delaunay star of the center over projected neighbors q[(m, 2)].

    Returns (tri_a, tri_b, ntri, open_center, degenerate, site_xy, nsite).
    tri_a/tri_b hold local neighbor indices; triangles whose three corners
    (center included) were all boundary at the previous step are excluded.
    site_xy collects circumcenters of kept triangles with circumradius
    beyond rmax_h.
    """
    m = q.shape[0]
    tri_a = np.empty(m, dtype=np.int64)
    tri_b = np.empty(m, dtype=np.int64)
    site_xy = np.empty((m, 2))
    nv = 0
    for k in range(m):
        if valid[k]:
            nv += 1
    if nv < 2:
        return tri_a, tri_b, 0, True, nv < 2, site_xy, 0

    inv = np.empty((nv, 2))
    loc = np.empty(nv, dtype=np.int64)
    jj = 0
    for k in range(m):
        if valid[k]:
            r2 = q[k, 0] * q[k, 0] + q[k, 1] * q[k, 1]
            inv[jj, 0] = q[k, 0] / r2
            inv[jj, 1] = q[k, 1] / r2
            loc[jj] = k
            jj += 1

    hull = _convex_hull(inv)
    nh = hull.shape[0]
    if nh < 3:
        # all inverted points collinear: no triangulation around the center
        return tri_a, tri_b, 0, True, True, site_xy, 0

    scale2 = 0.0
    for k in range(nv):
        s = inv[k, 0] * inv[k, 0] + inv[k, 1] * inv[k, 1]
        if s > scale2:
            scale2 = s

    ntri = 0
    nsite = 0
    for e in range(nh):
        a = hull[e]
        b = hull[(e + 1) % nh]
        cr = inv[a, 0] * inv[b, 1] - inv[a, 1] * inv[b, 0]
        # origin strictly on the inner side of the hull edge
        if cr <= 1e-12 * scale2:
            continue
        ka = loc[a]
        kb = loc[b]
        if center_prevb and prevb_local[ka] and prevb_local[kb]:
            continue
        tri_a[ntri] = ka
        tri_b[ntri] = kb
        ntri += 1
        # circumcircle of (0, q_a, q_b): 2 q.c = |q|^2 for both corners
        ax, ay = q[ka, 0], q[ka, 1]
        bx, by = q[kb, 0], q[kb, 1]
        det = 2.0 * (ax * by - ay * bx)
        ra = ax * ax + ay * ay
        rb = bx * bx + by * by
        cx = (by * ra - ay * rb) / det
        cy = (ax * rb - bx * ra) / det
        if cx * cx + cy * cy > rmax_h * rmax_h:
            site_xy[nsite, 0] = cx
            site_xy[nsite, 1] = cy
            nsite += 1

    if ntri == 0:
        return tri_a, tri_b, 0, True, False, site_xy, nsite

    # center-incident open edges: neighbor appearing in exactly one triangle
    open_center = False
    inc = np.zeros(m, dtype=np.int64)
    for t in range(ntri):
        inc[tri_a[t]] += 1
        inc[tri_b[t]] += 1
    for k in range(m):
        if inc[k] == 1:
            open_center = True
            break
    return tri_a, tri_b, ntri, open_center, False, site_xy, nsite


@njit(cache=True)
def _basis_row(u, v, out):
    out[0] = 1.0
    out[1] = u
    out[2] = v
    out[3] = u * u
    out[4] = u * v
    out[5] = v * v


@njit(cache=True)
def _solve_weighted(Bw, w2, rhs, nb, dim):
    """Minimum-W-norm stencils for the constraints Bw c = rhs.

    Bw is (nb, dim) monomial rows, w2 the squared weights. Returns the
    coefficient matrix (nb, nrhs) and the smallest/largest eigenvalues of
    the Gram matrix for rank diagnostics.
    """
    A = np.zeros((dim, dim))
    for j in range(nb):
        for a in range(dim):
            ba = Bw[j, a] * w2[j]
            for b in range(dim):
                A[a, b] += ba * Bw[j, b]
    ev = np.linalg.eigvalsh(A)
    emin = ev[0]
    emax = ev[dim - 1]
    nrhs = rhs.shape[1]
    C = np.zeros((nb, nrhs))
    if emin <= _EIG_RTOL * emax or emax == 0.0:
        return C, emin, emax
    lam = np.linalg.solve(A, rhs[:dim, :])
    for j in range(nb):
        for r in range(nrhs):
            s = 0.0
            for a in range(dim):
                s += Bw[j, a] * lam[a, r]
            C[j, r] = w2[j] * s
    return C, emin, emax


@njit(cache=True)
def _stabilize_laplacian(B, w2, b_lap, c, niter):
    """Push off-center Laplacian coefficients toward positivity.

    Alternating projection between the positivity orthant (off-center
    entries) and the consistency constraints, ending on a constraint
    projection so exactness is preserved. Returns (c_new, ok).
    """
    nb = B.shape[0]
    dim = B.shape[1]
    cmax = 0.0
    for j in range(nb):
        if abs(c[j]) > cmax:
            cmax = abs(c[j])
    neg = False
    for j in range(1, nb):
        if c[j] < -1e-12 * cmax:
            neg = True
            break
    if not neg:
        return c, True

    A = np.zeros((dim, dim))
    for j in range(nb):
        for a in range(dim):
            ba = B[j, a] * w2[j]
            for bb in range(dim):
                A[a, bb] += ba * B[j, bb]

    cc = c.copy()
    for _ in range(niter):
        for j in range(1, nb):
            if cc[j] < 0.0:
                cc[j] = 0.0
        resid = b_lap.copy()
        for j in range(nb):
            for a in range(dim):
                resid[a] -= B[j, a] * cc[j]
        lam = np.linalg.solve(A, resid)
        for j in range(nb):
            s = 0.0
            for a in range(dim):
                s += B[j, a] * lam[a]
            cc[j] += w2[j] * s
    ok = True
    for j in range(1, nb):
        if cc[j] < -1e-8 * cmax:
            ok = False
            break
    if not ok:
        return c, False
    return cc, True


@njit(cache=True)
def build_local(x, t1, t2, h, nbr, cnt, prevb, alpha, rmax,
                want_stencils, stabilize,
                cgrad, clap, flags, open_center, tri_a, tri_b, tri_n,
                sites, nsites_out):
    """Tessellation, boundary openness, hole sites, and stencils per point.

    Outputs are written into the preallocated arrays; `sites` holds the 3-D
    insertion candidates (capacity sites.shape[0]; excess is dropped and
    reported via nsites_out[1]).
    """
    N = x.shape[0]
    nsites = 0
    overflow = 0
    for i in range(N):
        m = cnt[i]
        q = np.empty((m, 2))
        valid = np.empty(m, dtype=np.bool_)
        pb = np.empty(m, dtype=np.bool_)
        w2 = np.empty(m)
        hi = h[i]
        q[0, 0] = 0.0
        q[0, 1] = 0.0
        valid[0] = False
        pb[0] = prevb[i]
        w2[0] = 1.0
        for k in range(1, m):
            j = nbr[i, k]
            dx = x[j, 0] - x[i, 0]
            dy = x[j, 1] - x[i, 1]
            dz = x[j, 2] - x[i, 2]
            u = dx * t1[i, 0] + dy * t1[i, 1] + dz * t1[i, 2]
            v = dx * t2[i, 0] + dy * t2[i, 1] + dz * t2[i, 2]
            q[k, 0] = u
            q[k, 1] = v
            valid[k] = (u * u + v * v) > (1e-9 * hi) ** 2
            pb[k] = prevb[j]
            r2 = dx * dx + dy * dy + dz * dz
            wgt = np.exp(-alpha * r2 / (hi * hi))
            w2[k] = wgt * wgt

        # --- tessellation / star
        ta, tb, ntri, opn, degen, sxy, nsx = _star_one(
            q[1:], valid[1:], pb[1:], pb[0], rmax * hi)
        open_center[i] = opn
        if degen:
            flags[i] |= FLAG_DEGENERATE
        tri_n[i] = ntri
        for t in range(ntri):
            tri_a[i, t] = ta[t] + 1   # back to neighbor-slot indexing
            tri_b[i, t] = tb[t] + 1
        for s in range(nsx):
            if nsites < sites.shape[0]:
                sites[nsites, 0] = x[i, 0] + sxy[s, 0] * t1[i, 0] + sxy[s, 1] * t2[i, 0]
                sites[nsites, 1] = x[i, 1] + sxy[s, 0] * t1[i, 1] + sxy[s, 1] * t2[i, 1]
                sites[nsites, 2] = x[i, 2] + sxy[s, 0] * t1[i, 2] + sxy[s, 1] * t2[i, 2]
                nsites += 1
            else:
                overflow = 1

        if not want_stencils:
            continue

        # --- stencils on h-scaled tangent coordinates
        B = np.empty((m, 6))
        for k in range(m):
            _basis_row(q[k, 0] / hi, q[k, 1] / hi, B[k])
        rhs = np.zeros((6, 3))
        rhs[1, 0] = 1.0 / hi            # d/dt1
        rhs[2, 1] = 1.0 / hi            # d/dt2
        rhs[3, 2] = 2.0 / (hi * hi)     # tangent-plane Laplacian
        rhs[5, 2] = 2.0 / (hi * hi)
        C, emin, emax = _solve_weighted(B, w2, rhs, m, 6)
        if emin <= _EIG_RTOL * emax or emax == 0.0:
            flags[i] |= FLAG_DEGREE1
            C, emin, emax = _solve_weighted(B[:, :3], w2, rhs[:3], m, 3)
            if emin <= _EIG_RTOL * emax or emax == 0.0:
                flags[i] |= FLAG_SINGULAR
                continue
            C[:, 2] = 0.0  # degree-1 basis cannot see the Laplacian
        elif stabilize:
            cl, ok = _stabilize_laplacian(B, w2, rhs[:6, 2].copy(),
                                          C[:, 2].copy(), 12)
            if ok:
                C[:, 2] = cl
            else:
                flags[i] |= FLAG_UNSTABILIZED

        for k in range(m):
            ct1 = C[k, 0]
            ct2 = C[k, 1]
            cgrad[i, k, 0] = ct1 * t1[i, 0] + ct2 * t2[i, 0]
            cgrad[i, k, 1] = ct1 * t1[i, 1] + ct2 * t2[i, 1]
            cgrad[i, k, 2] = ct1 * t1[i, 2] + ct2 * t2[i, 2]
            clap[i, k] = C[k, 2]

    nsites_out[0] = nsites
    nsites_out[1] = overflow


@njit(cache=True)
def _frame_of(n):
    """Deterministic tangent frame, same convention as cloud.tangent_frame."""
    ax = 0
    if abs(n[1]) < abs(n[ax]):
        ax = 1
    if abs(n[2]) < abs(n[ax]):
        ax = 2
    e = np.zeros(3)
    e[ax] = 1.0
    t1 = np.cross(n, e)
    t1 /= np.sqrt(t1[0] ** 2 + t1[1] ** 2 + t1[2] ** 2)
    t2 = np.cross(n, t1)
    return t1, t2


@njit(cache=True)
def project_onto_fits(queries, near, x, n, h, nbr, cnt, alpha, out):
    """Project query points onto local quadratic graphs of the reference cloud.

    For query m, a weighted least-squares height function over the tangent
    plane of reference point near[m] is fit from that point's neighborhood,
    and the query is moved onto the graph along the reference normal.
    """
    M = queries.shape[0]
    for m in range(M):
        i = near[m]
        t1, t2 = _frame_of(n[i])
        nb = cnt[i]
        A = np.zeros((6, 6))
        rhs = np.zeros(6)
        b = np.empty(6)
        for k in range(nb):
            j = nbr[i, k]
            dx = x[j, 0] - x[i, 0]
            dy = x[j, 1] - x[i, 1]
            dz = x[j, 2] - x[i, 2]
            u = (dx * t1[0] + dy * t1[1] + dz * t1[2]) / h[i]
            v = (dx * t2[0] + dy * t2[1] + dz * t2[2]) / h[i]
            z = dx * n[i, 0] + dy * n[i, 1] + dz * n[i, 2]
            r2 = dx * dx + dy * dy + dz * dz
            wgt = np.exp(-alpha * r2 / (h[i] * h[i]))
            _basis_row(u, v, b)
            for a in range(6):
                ba = b[a] * wgt
                rhs[a] += ba * z
                for c in range(6):
                    A[a, c] += ba * b[c]
        ev = np.linalg.eigvalsh(A)
        dim = 6
        if ev[0] <= 1e-10 * ev[5]:
            dim = 3  # collinear-ish neighborhood: fall back to a plane fit
            ev3 = np.linalg.eigvalsh(A[:3, :3])
            if ev3[0] <= 1e-10 * ev3[2]:
                dim = 1  # degenerate even for a plane: constant height
        coef = np.linalg.solve(A[:dim, :dim], rhs[:dim])
        dqx = queries[m, 0] - x[i, 0]
        dqy = queries[m, 1] - x[i, 1]
        dqz = queries[m, 2] - x[i, 2]
        uq = (dqx * t1[0] + dqy * t1[1] + dqz * t1[2]) / h[i]
        vq = (dqx * t2[0] + dqy * t2[1] + dqz * t2[2]) / h[i]
        _basis_row(uq, vq, b)
        z = 0.0
        for a in range(dim):
            z += coef[a] * b[a]
        for c in range(3):
            out[m, c] = (x[i, c] + uq * h[i] * t1[c] + vq * h[i] * t2[c]
                         + z * n[i, c])
