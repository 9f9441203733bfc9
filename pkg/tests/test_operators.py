"""Derivative stencils: exactness, analytic fields, projector algebra."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surfflow import _kernels
from surfflow.cloud import tangent_frame
from surfflow.operators import (StencilSet, covariant_vector_gradient,
                                project_neighbors_to_tangent, projector)
from surfflow.sampling import sample_plane, sample_sphere


def _exact_sphere(h, seed=0):
    cloud = sample_sphere(h, seed=seed)
    cloud.n = cloud.x / np.linalg.norm(cloud.x, axis=1, keepdims=True)
    return cloud


# ----------------------------------------------------------------------
# projector algebra


def test_projector_on_axis():
    P = projector(np.array([0.0, 0.0, 1.0]))
    assert np.allclose(P, np.diag([1.0, 1.0, 0.0]))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3))
def test_projector_properties(vals):
    n = np.asarray(vals)
    norm = np.linalg.norm(n)
    if norm < 1e-3:
        return
    n = n / norm
    P = projector(n)
    assert np.allclose(P, P.T, atol=1e-14)
    assert np.allclose(P @ P, P, atol=1e-14)
    assert np.allclose(P @ n, 0.0, atol=1e-14)


def test_projector_batch_matches_loop(rng):
    n = rng.normal(size=(7, 3))
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    batch = projector(n)
    for k in range(7):
        assert np.allclose(batch[k], projector(n[k]))


# ----------------------------------------------------------------------
# stencil exactness on tangent-plane monomials


def _stencil_exactness_residual(cloud, st_set, i, coef):
    """Max residual of the stencil at point i on the quadratic with
    tangent-plane coefficients (c0, c1, c2, c3, c4, c5)."""
    members = st_set.nbr[i, :st_set.cnt[i]]
    xi = project_neighbors_to_tangent(cloud, i, members)
    f = (coef[0] + coef[1] * xi[:, 0] + coef[2] * xi[:, 1]
         + coef[3] * xi[:, 0] ** 2 + coef[4] * xi[:, 0] * xi[:, 1]
         + coef[5] * xi[:, 1] ** 2)
    grad = f @ st_set.c_grad[i, :st_set.cnt[i]]
    lap = f @ st_set.c_lap[i, :st_set.cnt[i]]
    t1, t2 = tangent_frame(cloud.n[i])
    grad_exact = coef[1] * t1 + coef[2] * t2
    lap_exact = 2.0 * coef[3] + 2.0 * coef[5]
    return max(np.abs(grad - grad_exact).max(), abs(lap - lap_exact))


def test_exactness_on_random_quadratics(rng):
    cloud = _exact_sphere(0.3)
    st_set = StencilSet(cloud)
    fallback = (st_set.flags & _kernels.FLAG_DEGREE1) != 0
    ok = np.flatnonzero(~fallback)
    assert ok.size > 0.9 * len(cloud)
    for _ in range(60):
        i = int(rng.choice(ok))
        coef = rng.uniform(-2, 2, size=6)
        assert _stencil_exactness_residual(cloud, st_set, i, coef) < 1e-9


def test_constant_field_annihilated():
    cloud = _exact_sphere(0.3)
    st_set = StencilSet(cloud)
    f = np.full(len(cloud), 3.7)
    assert np.abs(st_set.apply_gradient(f)).max() < 1e-9
    assert np.abs(st_set.apply_laplacian(f)).max() < 1e-9


def test_gradient_is_tangent(rng):
    cloud = _exact_sphere(0.3)
    st_set = StencilSet(cloud)
    f = rng.normal(size=len(cloud))
    g = st_set.apply_gradient(f)
    assert np.abs((g * cloud.n).sum(axis=1)).max() < 1e-12


# ----------------------------------------------------------------------
# analytic fields on the unit sphere:
#   grad_S z   = (-xz, -yz, 1 - z^2)
#   lap_S z    = -2 z
#   lap_S z^2  = 2 - 6 z^2


def _sphere_errors(h):
    cloud = _exact_sphere(h)
    st_set = StencilSet(cloud)
    z = cloud.x[:, 2]
    g = st_set.apply_gradient(z)
    g_exact = np.column_stack([-cloud.x[:, 0] * z, -cloud.x[:, 1] * z,
                               1.0 - z ** 2])
    lap = st_set.apply_laplacian(z)
    lap2 = st_set.apply_laplacian(z ** 2)
    eg = np.linalg.norm(g - g_exact, axis=1).max()
    el = np.abs(lap + 2.0 * z).max()
    el2 = np.abs(lap2 - (2.0 - 6.0 * z ** 2)).max()
    return eg, el, el2


def test_sphere_fields_converge():
    coarse = _sphere_errors(0.4)
    fine = _sphere_errors(0.2)
    for c, f in zip(coarse, fine):
        assert f < 0.6 * c
    assert fine[0] < 0.05
    assert fine[1] < 0.5
    assert fine[2] < 1.0


# ----------------------------------------------------------------------
# vector/tensor wrappers


def test_vector_and_tensor_wrappers_consistent(rng):
    cloud = _exact_sphere(0.35)
    st_set = StencilSet(cloud)
    v = rng.normal(size=(len(cloud), 3))
    dg = st_set.directional_vector_gradient(v)
    for k in range(3):
        assert np.allclose(dg[:, k, :], st_set.apply_gradient(v[:, k]))
    # divergence of the identity-like tensor column-wise
    T = rng.normal(size=(len(cloud), 3, 3))
    dv = st_set.divergence_of_tensor(T)
    for k in range(3):
        assert np.allclose(dv[:, k], st_set.apply_divergence(T[:, :, k]))
    # trace of the covariant gradient equals the divergence
    P = projector(cloud.n)
    cov = covariant_vector_gradient(P, dg)
    assert np.allclose(np.trace(cov, axis1=1, axis2=2),
                       st_set.apply_divergence(v), atol=1e-9)


def test_covariant_gradient_is_tangential(rng):
    cloud = _exact_sphere(0.35)
    st_set = StencilSet(cloud)
    v = rng.normal(size=(len(cloud), 3))
    P = projector(cloud.n)
    cov = covariant_vector_gradient(P, st_set.directional_vector_gradient(v))
    resid = np.einsum("ij,ijk->ik", cloud.n, cov)
    assert np.abs(resid).max() < 1e-12


# ----------------------------------------------------------------------
# degenerate configurations


def test_collinear_neighborhood_is_singular():
    from surfflow.cloud import PointCloud
    from surfflow.errors import SingularStencil
    x = np.column_stack([np.linspace(0, 1, 8), np.zeros(8), np.zeros(8)])
    cloud = PointCloud(x, n=np.tile([0.0, 0.0, 1.0], (8, 1)),
                       h=np.full(8, 2.0))
    with pytest.raises(SingularStencil):
        StencilSet(cloud)
