"""Local 1-ring tessellations, boundary detection, and hole detection.

Each point's neighborhood is projected onto its tangent plane and the
Delaunay triangles incident on the point are extracted ("1-ring"). Rings at
different points need not stitch into a global mesh, and no triangle
quality is enforced; the triangles only serve two combinatorial purposes:

* a point with open edges (edges in exactly one ring triangle) incident on
  it belongs to the boundary;
* a ring triangle with circumradius beyond R_MAX * h marks a hole, to be
  filled at its circumcenter.

Triangles whose three corners were all boundary points at the previous
step are excluded, so regions outside the fluid (beyond a free boundary)
are neither closed over nor mistaken for holes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .cloud import PointCloud, R_MIN, Label, is_boundary, is_fixed
from .errors import DegenerateProjection
from .operators import StencilSet


@dataclass
class LocalTessellation:
    center: int
    triangles: list  # index triples (center, a, b), global indices
    open_edges: list = field(default_factory=list)  # index pairs


def build_geometry(cloud: PointCloud, prev_boundary=None,
                   stencils: bool = False) -> StencilSet:
    """One tessellation (and optionally stencil) pass over the cloud."""
    if prev_boundary is None:
        prev_boundary = is_boundary(cloud.label)
    return StencilSet(cloud, prev_boundary=prev_boundary,
                      want_stencils=stencils)


def local_tessellation(cloud: PointCloud, i: int, prev_boundary=None,
                       geo: StencilSet | None = None) -> LocalTessellation:
    """The 1-ring of triangles around point i with its open edges."""
    if geo is None:
        geo = build_geometry(cloud, prev_boundary)
    if geo.flags[i] & _kernels.FLAG_DEGENERATE:
        raise DegenerateProjection(f"collinear projected neighborhood at point {i}")
    nt = geo.tri_n[i]
    tris = []
    edge_count: dict[tuple, int] = {}
    for t in range(nt):
        a = int(geo.nbr[i, geo.tri_a[i, t]])
        b = int(geo.nbr[i, geo.tri_b[i, t]])
        tris.append((i, a, b))
        for e in ((i, a), (i, b), (a, b)):
            key = (min(e), max(e))
            edge_count[key] = edge_count.get(key, 0) + 1
    open_edges = [e for e, c in edge_count.items() if c == 1]
    return LocalTessellation(center=i, triangles=tris, open_edges=open_edges)


def detect_free_boundary(cloud: PointCloud, geo: StencilSet | None = None) -> np.ndarray:
    """Updated labels: FreeBoundary iff open edges are incident on the point.

    Fixed-boundary labels are preserved. The current labels act as the
    previous-step boundary set for the tessellation predicate.
    """
    if geo is None:
        geo = build_geometry(cloud)
    labels = cloud.label.copy()
    fixed = is_fixed(labels)
    labels[~fixed] = np.where(geo.open_center[~fixed],
                              Label.FREE_BOUNDARY, Label.INTERIOR)
    return labels


def detect_holes(cloud: PointCloud, geo: StencilSet | None = None) -> np.ndarray:
    """Insertion sites for holes: deduplicated projected circumcenters.

    Sites come from ring triangles with circumradius beyond R_MAX * h.
    They are thinned greedily so that no two sites, and no site and
    existing point, are closer than R_MIN * h.
    """
    if geo is None:
        geo = build_geometry(cloud)
    sites = geo.raw_sites
    if len(sites) == 0:
        return np.empty((0, 3))
    dist, near = cloud.tree.query(sites)
    hloc = cloud.h[near]
    keep_mask = dist >= R_MIN * hloc
    sites = sites[keep_mask]
    hloc = hloc[keep_mask]
    accepted: list[int] = []
    for s in range(len(sites)):
        ok = True
        for a in accepted:
            if np.linalg.norm(sites[s] - sites[a]) < R_MIN * min(hloc[s], hloc[a]):
                ok = False
                break
        if ok:
            accepted.append(s)
    return sites[accepted]
