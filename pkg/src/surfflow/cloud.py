"""Point-cloud surface representation.

A surface is discretized by a cloud of points, each carrying a unit normal,
a smoothing length h defining its interaction radius, a classification
label, and the physical fields (fluid velocity v, surface velocity w,
pressure p). Storage is struct-of-arrays for vectorized access.

Inter-particle spacing is kept between R_MIN*h and R_MAX*h by the
regularization machinery (see regularize.py).
"""

from __future__ import annotations

import enum

import numpy as np
from scipy.spatial import cKDTree

from .errors import FewNeighbors, OrientationFailure

# Spacing bounds relative to the smoothing length.
R_MIN = 0.2
R_MAX = 0.45

# Minimum neighborhood size for a degree-2 stencil in 2 tangent variables.
MIN_NEIGHBORS = 6


class Label(enum.IntEnum):
    INTERIOR = 0
    FREE_BOUNDARY = 1
    INFLOW = 2
    OUTFLOW = 3
    SLIP = 4
    DIRICHLET = 5


FIXED_LABELS = (Label.INFLOW, Label.OUTFLOW, Label.SLIP, Label.DIRICHLET)


def is_fixed(labels: np.ndarray) -> np.ndarray:
    """Boolean mask of fixed-boundary points (inflow/outflow/slip/Dirichlet)."""
    return labels >= Label.INFLOW


def is_boundary(labels: np.ndarray) -> np.ndarray:
    """Boolean mask of boundary points of any kind."""
    return labels >= Label.FREE_BOUNDARY


class PointCloud:
    """Indexed collection of surface points with a radius-query index.

    Attributes
    ----------
    x : (N, 3) positions
    n : (N, 3) unit surface normals
    nu : (N, 3) unit boundary conormals (NaN where undefined)
    label : (N,) int8 classification labels
    h : (N,) smoothing lengths
    v, w : (N, 3) fluid and surface velocities
    p : (N,) pressure
    """

    def __init__(self, x, n=None, h=None, label=None, v=None, w=None, p=None,
                 nu=None, extra=None):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        N = len(x)
        self.x = x
        self.n = np.zeros((N, 3)) if n is None else np.asarray(n, dtype=float)
        self.h = (np.ones(N) if h is None
                  else np.broadcast_to(np.asarray(h, dtype=float), (N,)).copy())
        self.label = (np.zeros(N, dtype=np.int8) if label is None
                      else np.asarray(label, dtype=np.int8).copy())
        self.v = np.zeros((N, 3)) if v is None else np.asarray(v, dtype=float)
        self.w = np.zeros((N, 3)) if w is None else np.asarray(w, dtype=float)
        self.p = np.zeros(N) if p is None else np.asarray(p, dtype=float)
        self.nu = np.full((N, 3), np.nan) if nu is None else np.asarray(nu, dtype=float)
        # named auxiliary per-point arrays (e.g. previous-step velocities);
        # carried through copy/subset/append and interpolated on merges
        self.extra: dict = {} if extra is None else dict(extra)
        self._tree = None

    def __len__(self):
        return len(self.x)

    @property
    def size(self):
        return len(self.x)

    # ------------------------------------------------------------------
    # spatial index

    @property
    def tree(self) -> cKDTree:
        if self._tree is None:
            self.build_index()
        return self._tree

    def build_index(self):
        """(Re)build the radius-query index. Call after any position change."""
        if len(self.x) == 0:
            raise ValueError("cannot index an empty cloud")
        self._tree = cKDTree(self.x)
        return self._tree

    def invalidate_index(self):
        self._tree = None

    def query_radius(self, center, radius):
        """Indices of all points within Euclidean `radius` of `center`."""
        return np.asarray(self.tree.query_ball_point(center, radius), dtype=np.int64)

    def neighborhood(self, i: int) -> np.ndarray:
        """All j with |x_j - x_i| <= h_i, including i itself.

        Raises FewNeighbors when the stencil would be underdetermined.
        """
        members = self.query_radius(self.x[i], self.h[i])
        if len(members) < MIN_NEIGHBORS:
            raise FewNeighbors(i, len(members), MIN_NEIGHBORS)
        return members

    def neighborhoods(self):
        """Padded neighbor table: (nbr[N, K] int64, count[N] int64).

        Row i lists the members of point i's neighborhood with i itself
        first; unused slots hold -1.
        """
        lists = self.tree.query_ball_point(self.x, self.h)
        counts = np.fromiter((len(l) for l in lists), dtype=np.int64, count=len(lists))
        short = np.nonzero(counts < MIN_NEIGHBORS)[0]
        if len(short):
            i = int(short[0])
            raise FewNeighbors(i, int(counts[i]), MIN_NEIGHBORS)
        K = int(counts.max())
        nbr = np.full((len(self.x), K), -1, dtype=np.int64)
        for i, l in enumerate(lists):
            a = np.asarray(l, dtype=np.int64)
            # center goes first so kernels can address it directly
            a = np.concatenate(([i], a[a != i]))
            nbr[i, :len(a)] = a
        return nbr, counts

    # ------------------------------------------------------------------
    # copying / mutation helpers

    def copy(self) -> "PointCloud":
        return PointCloud(self.x.copy(), self.n.copy(), self.h.copy(),
                          self.label.copy(), self.v.copy(), self.w.copy(),
                          self.p.copy(), self.nu.copy(),
                          {k: a.copy() for k, a in self.extra.items()})

    def subset(self, keep: np.ndarray) -> "PointCloud":
        """New cloud containing only the points selected by `keep`."""
        return PointCloud(self.x[keep], self.n[keep], self.h[keep],
                          self.label[keep], self.v[keep], self.w[keep],
                          self.p[keep], self.nu[keep],
                          {k: a[keep] for k, a in self.extra.items()})

    def append(self, other: "PointCloud") -> "PointCloud":
        return PointCloud(
            np.vstack([self.x, other.x]), np.vstack([self.n, other.n]),
            np.concatenate([self.h, other.h]),
            np.concatenate([self.label, other.label]),
            np.vstack([self.v, other.v]), np.vstack([self.w, other.w]),
            np.concatenate([self.p, other.p]), np.vstack([self.nu, other.nu]),
            {k: (np.concatenate([a, other.extra[k]]) if a.ndim == 1
                 else np.vstack([a, other.extra[k]]))
             for k, a in self.extra.items()})


# ----------------------------------------------------------------------
# tangent frames


def tangent_frame(n):
    """Orthonormal right-handed frame (t1, t2) completing the normal n.

    Deterministic for a given n: t1 is built against the coordinate axis
    least aligned with n, and t2 = n x t1 so that t1 x t2 = n.
    """
    n = np.asarray(n, dtype=float)
    if n.ndim == 1:
        t1, t2 = tangent_frame(n[None, :])
        return t1[0], t2[0]
    axis = np.argmin(np.abs(n), axis=1)
    e = np.zeros_like(n)
    e[np.arange(len(n)), axis] = 1.0
    t1 = np.cross(n, e)
    t1 /= np.linalg.norm(t1, axis=1, keepdims=True)
    t2 = np.cross(n, t1)
    return t1, t2


# ----------------------------------------------------------------------
# normal estimation


def estimate_normals(cloud: PointCloud, seed: int | None = 0,
                     seed_direction=None, weight_alpha: float = 6.0,
                     reference: np.ndarray | None = None) -> np.ndarray:
    """Estimate unit normals by weighted plane fits over each neighborhood.

    The normal at a point is the smallest-eigenvalue direction of the
    weighted covariance of its neighborhood (weights Gaussian in distance,
    as used by the derivative stencils). Orientation is made globally
    consistent by breadth-first propagation from `seed`; pass
    `seed_direction` to fix the seed's sign, or `reference` (previous
    normals, one per point) to orient every point locally instead.

    Raises OrientationFailure when a disconnected component cannot be
    reached from the seed.
    """
    nbr, cnt = cloud.neighborhoods()
    N = len(cloud)
    normals = np.empty((N, 3))
    for i in range(N):
        idx = nbr[i, :cnt[i]]
        d = cloud.x[idx] - cloud.x[i]
        wgt = np.exp(-weight_alpha * np.sum(d * d, axis=1) / cloud.h[i] ** 2)
        c = (d * wgt[:, None]).sum(axis=0) / wgt.sum()
        dd = d - c
        cov = (dd * wgt[:, None]).T @ dd
        _, vecs = np.linalg.eigh(cov)
        normals[i] = vecs[:, 0]

    if reference is not None:
        flip = np.sum(normals * reference, axis=1) < 0
        normals[flip] *= -1
        return normals

    if seed_direction is not None:
        if normals[seed] @ np.asarray(seed_direction) < 0:
            normals[seed] *= -1

    # breadth-first sign propagation over the neighbor graph
    oriented = np.zeros(N, dtype=bool)
    oriented[seed] = True
    queue = [seed]
    while queue:
        i = queue.pop()
        for j in nbr[i, :cnt[i]]:
            if not oriented[j]:
                if normals[j] @ normals[i] < 0:
                    normals[j] *= -1
                oriented[j] = True
                queue.append(int(j))
    if not oriented.all():
        raise OrientationFailure(
            f"{np.count_nonzero(~oriented)} points unreachable from seed {seed}")
    return normals
