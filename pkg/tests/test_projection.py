"""Projection of off-surface points back onto a sampled surface."""

import numpy as np
import pytest

from surfflow.errors import NoReference
from surfflow.projection import project_to_boundary_curve, project_to_surface
from surfflow.sampling import sample_plane, sample_sphere


def _exact_sphere(h):
    cloud = sample_sphere(h)
    cloud.n = cloud.x / np.linalg.norm(cloud.x, axis=1, keepdims=True)
    return cloud


def test_radial_offset_returns_to_sphere(rng):
    ref = _exact_sphere(0.2)
    u = rng.normal(size=(40, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    out = project_to_surface(1.02 * u, ref)
    assert np.abs(np.linalg.norm(out, axis=1) - 1.0).max() < 5e-3


def test_projection_error_is_second_order(rng):
    # residual distance from the exact sphere shrinks ~quadratically in h
    u = rng.normal(size=(30, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    resid = []
    for h in (0.4, 0.2):
        ref = _exact_sphere(h)
        out = project_to_surface(1.05 * u, ref)
        resid.append(np.abs(np.linalg.norm(out, axis=1) - 1.0).max())
    assert resid[1] < 0.35 * resid[0]


def test_points_on_plane_are_fixed_points():
    ref = sample_plane(0.3, jitter=0.0)
    q = ref.x[10:20] + np.array([0.0, 0.0, 0.07])
    out = project_to_surface(q, ref)
    assert np.abs(out[:, 2]).max() < 1e-9
    # in-plane coordinates are preserved by the normal-direction move
    assert np.allclose(out[:, :2], q[:, :2], atol=1e-9)


def test_projection_is_idempotent(rng):
    ref = _exact_sphere(0.25)
    u = rng.normal(size=(20, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    once = project_to_surface(1.03 * u, ref)
    twice = project_to_surface(once, ref)
    assert np.abs(twice - once).max() < 1e-6


def test_single_point_shape():
    ref = _exact_sphere(0.25)
    out = project_to_surface(np.array([1.04, 0.0, 0.0]), ref)
    assert out.shape == (3,)
    assert abs(np.linalg.norm(out) - 1.0) < 5e-3


def test_far_query_raises():
    ref = _exact_sphere(0.3)
    with pytest.raises(NoReference):
        project_to_surface(np.array([[5.0, 0.0, 0.0]]), ref)


def test_boundary_curve_projection_circle():
    # boundary curve = unit circle in the z=0 plane sampled by fixed points
    m = 60
    th = np.arange(m) * (2 * np.pi / m)
    from surfflow.cloud import Label, PointCloud
    x = np.column_stack([np.cos(th), np.sin(th), np.zeros(m)])
    ref = PointCloud(x, n=np.tile([0.0, 0.0, 1.0], (m, 1)),
                     h=np.full(m, 0.5),
                     label=np.full(m, Label.SLIP, dtype=np.int8))
    mask = np.ones(m, dtype=bool)
    q = np.array([[1.05 * np.cos(0.31), 1.05 * np.sin(0.31), 0.0]])
    out = project_to_boundary_curve(q, ref, mask)
    assert abs(np.linalg.norm(out[0, :2]) - 1.0) < 5e-3
    assert abs(out[0, 2]) < 1e-9


def test_boundary_curve_far_query_raises():
    from surfflow.cloud import Label, PointCloud
    m = 30
    th = np.arange(m) * (2 * np.pi / m)
    x = np.column_stack([np.cos(th), np.sin(th), np.zeros(m)])
    ref = PointCloud(x, n=np.tile([0.0, 0.0, 1.0], (m, 1)),
                     h=np.full(m, 0.3),
                     label=np.full(m, Label.SLIP, dtype=np.int8))
    with pytest.raises(NoReference):
        project_to_boundary_curve(np.array([[3.0, 0.0, 0.0]]),
                                  ref, np.ones(m, dtype=bool))
