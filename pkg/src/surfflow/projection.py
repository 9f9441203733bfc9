"""Projection of points onto the surface described by a point cloud.

The surface is reconstructed locally: around the reference point nearest to
each query, a weighted quadratic height function over its tangent plane is
fit from its neighborhood, and the query is moved onto that graph along the
reference normal. One extra pass refreshes the nearest reference after the
first move, which is enough for second-order accuracy.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .cloud import PointCloud
from .errors import NoReference
from .operators import WEIGHT_ALPHA


def project_to_surface(points, reference: PointCloud, iterations: int = 2,
                       max_distance_factor: float = 2.0):
    """Project `points` ((M, 3) or (3,)) onto the reference cloud's surface.

    Raises NoReference when a query has no reference point within
    `max_distance_factor` times the local smoothing length.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    single = np.asarray(points).ndim == 1
    nbr, cnt = reference.neighborhoods()
    out = pts.copy()
    for _ in range(max(1, iterations)):
        dist, near = reference.tree.query(out)
        too_far = dist > max_distance_factor * reference.h[near]
        if np.any(too_far):
            m = int(np.nonzero(too_far)[0][0])
            raise NoReference(
                f"query {m} at distance {dist[m]:.3g} from the reference cloud")
        moved = np.empty_like(out)
        _kernels.project_onto_fits(out, near.astype(np.int64), reference.x,
                                   reference.n, reference.h, nbr, cnt,
                                   WEIGHT_ALPHA, moved)
        out = moved
    return out[0] if single else out


def project_to_boundary_curve(points, reference: PointCloud, mask,
                              fit_radius_factor: float = 1.5):
    """Project points onto the curve sampled by the masked reference points.

    Used for slip-boundary motion: the boundary curve is reconstructed from
    nearby fixed-boundary points by a local quadratic fit in arc-length
    parameter along the dominant direction.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    single = np.asarray(points).ndim == 1
    bx = reference.x[mask]
    if len(bx) == 0:
        raise NoReference("no boundary points to project onto")
    from scipy.spatial import cKDTree
    btree = cKDTree(bx)
    bh = reference.h[mask]
    out = pts.copy()
    for m in range(len(pts)):
        dist, bi = btree.query(pts[m])
        if dist > 2.0 * bh[bi]:
            raise NoReference(
                f"query {m} at distance {dist:.3g} from the boundary curve")
        members = btree.query_ball_point(bx[bi], fit_radius_factor * bh[bi])
        d = bx[members] - bx[bi]
        if len(members) < 3:
            out[m] = bx[bi]
            continue
        # dominant direction of the local curve sample
        _, _, vt = np.linalg.svd(d, full_matrices=False)
        t = vt[0]
        s = d @ t
        V = np.vander(s, 3, increasing=True)
        coef, *_ = np.linalg.lstsq(V, d, rcond=None)
        sq = (pts[m] - bx[bi]) @ t
        out[m] = bx[bi] + np.array([1.0, sq, sq * sq]) @ coef
    return out[0] if single else out
