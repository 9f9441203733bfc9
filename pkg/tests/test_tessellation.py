"""One-ring tessellation, boundary detection, hole detection."""

import numpy as np
import pytest

from surfflow.cloud import Label, PointCloud, is_boundary
from surfflow.errors import DegenerateProjection
from surfflow.sampling import sample_plane, sample_sphere
from surfflow.tessellation import (build_geometry, detect_free_boundary,
                                   detect_holes, local_tessellation)


def _plane_cloud(m=9, h=1.2, spacing=0.4):
    g = np.arange(m) * spacing
    g -= g.mean()
    X, Y = np.meshgrid(g, g)
    x = np.column_stack([X.ravel(), Y.ravel(), np.zeros(X.size)])
    n = np.tile([0.0, 0.0, 1.0], (len(x), 1))
    return PointCloud(x, n=n, h=np.full(len(x), h))


def test_half_disc_edge_points_are_open():
    cloud = _plane_cloud()
    labels = detect_free_boundary(cloud)
    onhull = (np.abs(cloud.x[:, 0]) > cloud.x[:, 0].max() - 1e-9) | \
             (np.abs(cloud.x[:, 1]) > cloud.x[:, 1].max() - 1e-9)
    assert np.all(labels[onhull] == Label.FREE_BOUNDARY)
    # deep interior points are not flagged
    inner = np.linalg.norm(cloud.x[:, :2], axis=1) < 0.5
    assert np.all(labels[inner] == Label.INTERIOR)


def test_closed_sphere_has_no_open_edges():
    cloud = sample_sphere(0.3)
    labels = detect_free_boundary(cloud)
    assert not is_boundary(labels).any()


def test_one_ring_triangles_contain_center():
    cloud = _plane_cloud()
    geo = build_geometry(cloud)
    i = len(cloud) // 2
    ring = local_tessellation(cloud, i, geo=geo)
    assert len(ring.triangles) >= 3
    for (c, a, b) in ring.triangles:
        assert c == i and a != i and b != i
    # an interior point's ring is closed around the center: no open edge
    # touches i (rim edges of the ring legitimately appear once each)
    assert not any(i in e for e in ring.open_edges)


def test_one_ring_open_edges_at_boundary():
    cloud = _plane_cloud()
    corner = int(np.argmin(cloud.x[:, 0] + cloud.x[:, 1]))
    ring = local_tessellation(cloud, corner)
    assert any(corner in e for e in ring.open_edges)


def test_degenerate_projection_raises():
    x = np.column_stack([np.linspace(0, 1, 8), np.zeros(8), np.zeros(8)])
    cloud = PointCloud(x, n=np.tile([0.0, 0.0, 1.0], (8, 1)),
                       h=np.full(8, 2.0))
    with pytest.raises(DegenerateProjection):
        local_tessellation(cloud, 3)


def test_hole_detected_and_site_centered():
    # punch a hole in a regular grid by removing a 2x2 block; the ring
    # triangles spanning the gap have large circumradius
    cloud = _plane_cloud(m=11, h=1.4, spacing=0.42)
    c = cloud.x[:, :2]
    gone = (np.abs(c[:, 0]) < 0.63) & (np.abs(c[:, 1]) < 0.63)
    assert gone.sum() >= 4
    cloud = cloud.subset(~gone)
    cloud.invalidate_index()
    sites = detect_holes(cloud)
    assert len(sites) >= 1
    # at least one site lands inside the removed block
    inside = (np.abs(sites[:, 0]) < 0.63) & (np.abs(sites[:, 1]) < 0.63)
    assert inside.any()


def test_intact_grid_has_no_holes():
    cloud = _plane_cloud(m=11, h=1.4, spacing=0.42)
    assert len(detect_holes(cloud)) == 0


def test_sites_respect_minimum_spacing():
    from surfflow.cloud import R_MIN
    cloud = _plane_cloud(m=13, h=1.4, spacing=0.42)
    c = cloud.x[:, :2]
    gone = (np.abs(c[:, 0]) < 1.1) & (np.abs(c[:, 1]) < 1.1)
    cloud = cloud.subset(~gone)
    cloud.invalidate_index()
    sites = detect_holes(cloud)
    assert len(sites) >= 2
    d, _ = cloud.tree.query(sites)
    assert np.all(d >= R_MIN * cloud.h.min())
    for a in range(len(sites)):
        for b in range(a + 1, len(sites)):
            assert np.linalg.norm(sites[a] - sites[b]) >= R_MIN * cloud.h.min()


def test_fixed_labels_preserved_by_relabel():
    cloud = _plane_cloud()
    onhull = (np.abs(cloud.x[:, 0]) > cloud.x[:, 0].max() - 1e-9) | \
             (np.abs(cloud.x[:, 1]) > cloud.x[:, 1].max() - 1e-9)
    cloud.label[onhull] = Label.DIRICHLET
    labels = detect_free_boundary(cloud)
    assert np.all(labels[onhull] == Label.DIRICHLET)
