"""Discrete surface differential operators.

Stencil coefficients are least-squares fits over each point's neighborhood,
exact on all monomials up to degree 2 in the local tangent coordinates and
minimal in a weighted norm among all such stencils. Gradients are rotated
back to R^3 with a zero normal component, so applying them to any scalar
field yields a vector tangent to the surface by construction.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .cloud import PointCloud, R_MAX, tangent_frame
from .errors import SingularStencil

WEIGHT_ALPHA = 6.0


def projector(n):
    """Tangent-plane projector P = I - n n^T (single normal or batch)."""
    n = np.asarray(n, dtype=float)
    if n.ndim == 1:
        return np.eye(3) - np.outer(n, n)
    return np.eye(3)[None, :, :] - n[:, :, None] * n[:, None, :]


def project_neighbors_to_tangent(cloud: PointCloud, i: int, members=None):
    """Tangent-plane coordinates (xi, eta) of point i's neighbors."""
    if members is None:
        members = cloud.neighborhood(i)
    t1, t2 = tangent_frame(cloud.n[i])
    d = cloud.x[members] - cloud.x[i]
    return np.column_stack([d @ t1, d @ t2])


class StencilSet:
    """Per-point derivative stencils plus the tessellation byproducts.

    Built in a single pass over the cloud: gradient coefficients (R^3,
    three components per neighbor), Laplacian coefficients, the 1-ring
    triangle lists, the open-edge flag per point, and candidate hole
    insertion sites.
    """

    def __init__(self, cloud: PointCloud, prev_boundary=None,
                 weight_alpha: float = WEIGHT_ALPHA, stabilize: bool = True,
                 want_stencils: bool = True):
        self.cloud = cloud
        nbr, cnt = cloud.neighborhoods()
        self.nbr = nbr
        self.cnt = cnt
        N, K = nbr.shape
        if prev_boundary is None:
            prev_boundary = np.zeros(N, dtype=bool)
        t1, t2 = tangent_frame(cloud.n)
        self.t1, self.t2 = t1, t2

        cap = max(4 * N, 1024)
        while True:
            cgrad = np.zeros((N, K, 3))
            clap = np.zeros((N, K))
            flags = np.zeros(N, dtype=np.uint8)
            open_center = np.zeros(N, dtype=bool)
            tri_a = np.zeros((N, K + 2), dtype=np.int64)
            tri_b = np.zeros((N, K + 2), dtype=np.int64)
            tri_n = np.zeros(N, dtype=np.int64)
            sites = np.zeros((cap, 3))
            nsites = np.zeros(2, dtype=np.int64)
            _kernels.build_local(
                cloud.x, t1, t2, cloud.h, nbr, cnt,
                np.ascontiguousarray(prev_boundary, dtype=bool),
                weight_alpha, R_MAX, want_stencils, stabilize,
                cgrad, clap, flags, open_center, tri_a, tri_b, tri_n,
                sites, nsites)
            if nsites[1] == 0:
                break
            cap *= 4

        if np.any(flags & _kernels.FLAG_SINGULAR):
            bad = int(np.nonzero(flags & _kernels.FLAG_SINGULAR)[0][0])
            raise SingularStencil(f"degenerate neighbor configuration at point {bad}")

        self.c_grad = cgrad
        self.c_lap = clap
        self.flags = flags
        self.open_center = open_center
        self.tri_a = tri_a
        self.tri_b = tri_b
        self.tri_n = tri_n
        self.raw_sites = sites[:nsites[0]]

    # ------------------------------------------------------------------
    # operator application (read-only sparse products)

    def apply_gradient(self, field: np.ndarray) -> np.ndarray:
        """Surface gradient of a scalar field: (N, 3), tangent per point."""
        f = np.where(self.nbr >= 0, np.asarray(field)[self.nbr], 0.0)
        return np.einsum("ik,ikm->im", f, self.c_grad)

    def apply_divergence(self, vec: np.ndarray) -> np.ndarray:
        """Surface divergence of a vector field: (N,)."""
        vec = np.asarray(vec)
        out = np.zeros(len(self.cnt))
        for k in range(3):
            f = np.where(self.nbr >= 0, vec[:, k][self.nbr], 0.0)
            out += np.einsum("ik,ik->i", f, self.c_grad[:, :, k])
        return out

    def apply_laplacian(self, field: np.ndarray) -> np.ndarray:
        """Surface Laplacian of a scalar field: (N,)."""
        f = np.where(self.nbr >= 0, np.asarray(field)[self.nbr], 0.0)
        return np.einsum("ik,ik->i", f, self.c_lap)

    def directional_vector_gradient(self, vec: np.ndarray) -> np.ndarray:
        """Directional surface gradient of a vector field: (N, 3, 3).

        Row k of the matrix at each point is the surface gradient of
        component k.
        """
        vec = np.asarray(vec)
        out = np.empty((len(self.cnt), 3, 3))
        for k in range(3):
            out[:, k, :] = self.apply_gradient(vec[:, k])
        return out

    def divergence_of_tensor(self, T: np.ndarray) -> np.ndarray:
        """Column-wise divergence of a tensor field T[(N, 3, 3)]: (N, 3)."""
        out = np.empty((len(self.cnt), 3))
        for k in range(3):
            out[:, k] = self.apply_divergence(T[:, :, k])
        return out


def covariant_vector_gradient(P, dir_grad):
    """Project a directional gradient to the tangent plane: P (grad v) P.

    The directional gradient already carries the right-hand projector, so
    only the left projection is applied here. Accepts single matrices or
    batches.
    """
    return P @ dir_grad
