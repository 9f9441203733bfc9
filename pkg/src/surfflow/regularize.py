"""Point-cloud regularization: merging close points and filling holes.

After a Lagrangian movement step the spacing bounds [R_MIN*h, R_MAX*h] can
be violated. Pairs closer than R_MIN*h are merged (boundary points first,
and a boundary point is never merged away into an interior one); holes
flagged by the tessellation are filled by inserting interpolated points at
the projected circumcenters.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .cloud import PointCloud, R_MIN, Label, is_boundary, is_fixed
from .projection import project_to_surface
from .operators import WEIGHT_ALPHA
from .tessellation import build_geometry, detect_free_boundary, detect_holes

class MLSInterpolator:
    """Moving-least-squares field transfer of order 2.

    Fits a weighted quadratic in the tangent plane of the nearest source
    point over its neighborhood, per field component; linear fields are
    reproduced exactly. The weight function matches the stencil weights.
    """

    def __init__(self, source: PointCloud, alpha: float = WEIGHT_ALPHA):
        self.src = source
        self.alpha = alpha
        self.nbr, self.cnt = source.neighborhoods()

    def __call__(self, points, fields):
        """Interpolate the named per-point fields at the query points.

        `fields` maps names to (N,) or (N, 3) source arrays; returns the
        same names mapped to interpolated values at the queries.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        src = self.src
        _, near = src.tree.query(pts)
        names = list(fields)
        cols = []
        for name in names:
            arr = np.asarray(fields[name], dtype=float)
            cols.append(arr[:, None] if arr.ndim == 1 else arr)
        stacked = np.hstack(cols)
        out = np.empty((len(pts), stacked.shape[1]))
        from .cloud import tangent_frame
        for m, i in enumerate(near):
            idx = self.nbr[i, :self.cnt[i]]
            t1, t2 = tangent_frame(src.n[i])
            d = src.x[idx] - src.x[i]
            hi = src.h[i]
            u = (d @ t1) / hi
            v = (d @ t2) / hi
            r2 = np.sum(d * d, axis=1)
            wgt = np.exp(-self.alpha * r2 / hi ** 2)
            B = np.column_stack([np.ones_like(u), u, v, u * u, u * v, v * v])
            A = (B * wgt[:, None]).T @ B
            rhs = (B * wgt[:, None]).T @ stacked[idx]
            dim = 6
            ev = np.linalg.eigvalsh(A)
            if ev[0] <= 1e-10 * ev[-1]:
                dim = 3
                ev3 = np.linalg.eigvalsh(A[:3, :3])
                if ev3[0] <= 1e-10 * ev3[-1]:
                    dim = 1
            coef = np.linalg.solve(A[:dim, :dim], rhs[:dim])
            dq = pts[m] - src.x[i]
            uq, vq = (dq @ t1) / hi, (dq @ t2) / hi
            bq = np.array([1.0, uq, vq, uq * uq, uq * vq, vq * vq])[:dim]
            val = bq @ coef
            # an ill-conditioned quadratic can extrapolate grotesquely near
            # one-sided neighborhoods; interpolated values may never leave
            # the envelope of the contributing data
            data = stacked[idx]
            out[m] = np.clip(val, data.min(axis=0), data.max(axis=0))
        result = {}
        c0 = 0
        for name, col in zip(names, cols):
            w = col.shape[1]
            vals = out[:, c0:c0 + w]
            result[name] = vals[:, 0] if w == 1 else vals
            c0 += w
        return result


def _interp_fields(cloud: PointCloud, interpolator, points):
    fields = {"v": cloud.v, "w": cloud.w, "p": cloud.p, "n": cloud.n,
              "h": cloud.h}
    for name, arr in cloud.extra.items():
        fields[name] = arr
    return interpolator(points, fields)


def merge_close_points(cloud: PointCloud, interpolator=None) -> PointCloud:
    """Merge until no pair is closer than R_MIN*h; boundary pairs first.

    A boundary/interior pair keeps the boundary point (the interior one is
    deleted); a fixed/free pair keeps the fixed point; matching pairs merge
    to their midpoint with interpolated fields.  Midpoints of one pass can
    themselves violate the spacing bound against bystanders, so passes
    repeat until the invariant holds.
    """
    while True:
        merged = _merge_pass(cloud, interpolator)
        if merged is cloud:
            return cloud
        cloud, interpolator = merged, None


def _merge_pass(cloud: PointCloud, interpolator=None) -> PointCloud:
    if interpolator is None:
        interpolator = MLSInterpolator(cloud)
    hmax = cloud.h.max()
    pairs = cloud.tree.query_pairs(R_MIN * hmax, output_type="ndarray")
    if len(pairs):
        hm = np.minimum(cloud.h[pairs[:, 0]], cloud.h[pairs[:, 1]])
        d = np.linalg.norm(cloud.x[pairs[:, 0]] - cloud.x[pairs[:, 1]], axis=1)
        sel = d < R_MIN * hm
        pairs, d = pairs[sel], d[sel]
    if len(pairs) == 0:
        return cloud

    bnd = is_boundary(cloud.label)
    fix = is_fixed(cloud.label)
    # boundary-involving pairs first, then by closeness
    order = np.lexsort((d, ~(bnd[pairs[:, 0]] | bnd[pairs[:, 1]])))
    alive = np.ones(len(cloud), dtype=bool)
    midpoints = []       # (position, label, h, nu) for true merges
    for i, j in pairs[order]:
        if not (alive[i] and alive[j]):
            continue
        bi, bj = bnd[i], bnd[j]
        if bi != bj:                      # boundary has priority: drop interior
            alive[j if bi else i] = False
        elif bi and (fix[i] != fix[j]):   # fixed beats free boundary
            alive[j if fix[i] else i] = False
        else:
            alive[i] = alive[j] = False
            mid = 0.5 * (cloud.x[i] + cloud.x[j])
            lab = max(cloud.label[i], cloud.label[j])
            nu = cloud.nu[i] if np.isfinite(cloud.nu[i]).all() else cloud.nu[j]
            midpoints.append((mid, lab, 0.5 * (cloud.h[i] + cloud.h[j]), nu))

    merged = cloud.subset(alive)
    if midpoints:
        pos = np.array([m[0] for m in midpoints])
        vals = _interp_fields(cloud, interpolator, pos)
        new = PointCloud(pos,
                         n=_unit(vals["n"]),
                         h=np.array([m[2] for m in midpoints]),
                         label=np.array([m[1] for m in midpoints], dtype=np.int8),
                         v=vals["v"], w=vals["w"], p=vals["p"],
                         nu=np.array([m[3] for m in midpoints]))
        for name in cloud.extra:
            new.extra[name] = np.asarray(vals[name])
        merged = merged.append(new)
    merged.invalidate_index()
    return merged


def insert_points(cloud: PointCloud, sites, interpolator=None) -> PointCloud:
    """Insert interior points at the given hole sites.

    Sites are projected onto the locally reconstructed surface; fields are
    interpolated from the existing cloud.
    """
    sites = np.atleast_2d(np.asarray(sites, dtype=float))
    if sites.size == 0:
        return cloud
    if interpolator is None:
        interpolator = MLSInterpolator(cloud)
    # a genuine hole site sits within the support of its ring points;
    # distant circumcenters come from degenerate gap triangles
    d0, n0 = cloud.tree.query(sites)
    sane = d0 <= cloud.h[n0]
    sites = sites[sane]
    if len(sites) == 0:
        return cloud
    pos = project_to_surface(sites, cloud)
    # one-sided fits near gaps can throw the projection far off the
    # surface; reject those sites rather than inserting stray points
    dist, near = cloud.tree.query(pos)
    hloc = cloud.h[near]
    ok = (np.linalg.norm(pos - sites, axis=1) <= 0.5 * hloc) \
        & (dist >= R_MIN * hloc) & (dist <= hloc)
    pos = pos[ok]
    if len(pos) == 0:
        return cloud
    vals = _interp_fields(cloud, interpolator, pos)
    new = PointCloud(pos, n=_unit(vals["n"]), h=np.asarray(vals["h"]),
                     label=np.full(len(pos), Label.INTERIOR, dtype=np.int8),
                     v=vals["v"], w=vals["w"], p=vals["p"])
    for name in cloud.extra:
        new.extra[name] = np.asarray(vals[name])
    out = cloud.append(new)
    out.invalidate_index()
    return out


def regularize_cloud(cloud: PointCloud, relabel: bool = True,
                     max_rounds: int = 3,
                     inserted_log: Optional[list] = None) -> PointCloud:
    """Merge, insert, and relabel until the spacing invariants hold.

    When `inserted_log` is a list, every batch of inserted positions is
    appended to it (as an (m, 3) array).
    """
    for _ in range(max_rounds):
        before = len(cloud)
        cloud = _drop_isolated(cloud)
        cloud = merge_close_points(cloud)
        geo = build_geometry(cloud)
        sites = detect_holes(cloud, geo)
        rim = _inflow_sites(cloud)
        if len(rim):
            sites = np.vstack([sites, rim]) if len(sites) else rim
        if len(sites):
            n_pre = len(cloud)
            cloud = insert_points(cloud, sites)
            added = len(cloud) - n_pre
            if inserted_log is not None and added:
                inserted_log.append(cloud.x[-added:].copy())
        elif len(cloud) == before:
            break
    # a final merge can leave a survivor starved; sweep once more so the
    # cloud handed back always supports stencil assembly
    cloud = _drop_isolated(cloud)
    if relabel:
        geo = build_geometry(cloud)
        cloud.label = detect_free_boundary(cloud, geo)
    return cloud


def _inflow_sites(cloud: PointCloud) -> np.ndarray:
    """Seed sites where the fluid has receded from a fixed boundary.

    At a boundary with imposed velocity, material points can drift away
    from the (static) boundary points, opening a gap that no ring
    triangle spans reliably.  For every fixed point whose nearest movable
    neighbor is further than half its smoothing length, a site is placed
    halfway across the gap along the inward conormal.
    """
    fix = is_fixed(cloud.label)
    if not fix.any() or fix.all():
        return np.empty((0, 3))
    from scipy.spatial import cKDTree
    d, _ = cKDTree(cloud.x[~fix]).query(cloud.x[fix])
    gap = d > 0.5 * cloud.h[fix]
    if not gap.any():
        return np.empty((0, 3))
    xb = cloud.x[fix][gap]
    return xb - 0.5 * d[gap, None] * cloud.nu[fix][gap]


def _drop_isolated(cloud: PointCloud) -> PointCloud:
    """Remove movable points too starved of neighbors to carry a stencil.

    A point left with fewer than the minimum neighborhood size cannot be
    fit, merged, or interpolated from; deleting it turns the defect into
    an ordinary hole that insertion can fill.  Fixed boundary points are
    kept regardless so the domain outline cannot erode.
    """
    from .cloud import MIN_NEIGHBORS
    while True:
        counts = np.fromiter(
            (len(l) for l in cloud.tree.query_ball_point(cloud.x, cloud.h)),
            dtype=np.int64, count=len(cloud))
        starved = (counts < MIN_NEIGHBORS) & ~is_fixed(cloud.label)
        if not starved.any():
            return cloud
        # removing a starved point can starve its survivors, so sweep
        # until the count map is stable
        cloud = cloud.subset(~starved)
        cloud.invalidate_index()


def _unit(v):
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / np.where(norm == 0, 1.0, norm)
