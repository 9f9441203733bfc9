"""Point-cloud generators and mesh-vertex ingestion."""

import numpy as np
import pytest

from surfflow.cloud import Label, estimate_normals, is_boundary
from surfflow.sampling import (load_vertices, sample_cylinder,
                               sample_droplet_on_cylinder, sample_hemisphere,
                               sample_plane, sample_sphere,
                               sample_spherical_annulus,
                               sample_three_quarter_sphere, sample_torus)


def test_sphere_normals_are_radial():
    cloud = sample_sphere(0.2)
    r = np.linalg.norm(cloud.x, axis=1)
    assert np.allclose(r, 1.0, atol=1e-12)
    radial = cloud.x / r[:, None]
    assert np.allclose(cloud.n, radial, atol=1e-12)


def test_estimate_normals_matches_analytic_radial():
    # normals recomputed from scratch on a sphere approach x/|x| under
    # refinement
    errs = []
    for h in (0.4, 0.2):
        cloud = sample_sphere(h)
        exact = cloud.x / np.linalg.norm(cloud.x, axis=1, keepdims=True)
        est = estimate_normals(cloud, reference=exact)
        dots = np.abs((est * exact).sum(axis=1))
        errs.append(np.arccos(np.clip(dots, -1, 1)).max())
    assert errs[1] < errs[0]
    assert errs[1] < 0.2


def test_closed_sphere_has_no_boundary():
    from surfflow.tessellation import detect_free_boundary
    cloud = sample_sphere(0.25)
    labels = detect_free_boundary(cloud)
    assert not is_boundary(labels).any()


def test_three_quarter_sphere_population():
    cloud = sample_three_quarter_sphere(0.1)
    # the benchmark resolution populates roughly 10.5k points
    assert 0.9 * 10488 <= len(cloud) <= 1.1 * 10488
    rim = cloud.label == Label.DIRICHLET
    assert rim.any()
    az = np.mod(np.arctan2(cloud.x[:, 1], cloud.x[:, 0]), 2 * np.pi)
    interior = ~rim
    margin = 1e-6
    assert np.all((az[interior] <= 1.5 * np.pi + margin)
                  | (az[interior] >= 2 * np.pi - margin))


def test_cylinder_population_and_rims():
    cloud = sample_cylinder(0.1, radius=1.0, xlim=(0.0, 1.0))
    assert 0.9 * 7119 <= len(cloud) <= 1.1 * 7119
    r = np.sqrt(cloud.x[:, 1] ** 2 + cloud.x[:, 2] ** 2)
    assert np.allclose(r, 1.0, atol=1e-10)
    assert (cloud.label == Label.INFLOW).any()
    assert (cloud.label == Label.OUTFLOW).any()
    inflow = cloud.label == Label.INFLOW
    assert np.allclose(cloud.x[inflow, 0], 0.0, atol=1e-10)


def test_plane_rim_is_labeled_with_outward_conormal():
    cloud = sample_plane(0.3, extent=1.0)
    rim = cloud.label == Label.DIRICHLET
    assert rim.any()
    # conormals point away from the square's center
    out = (cloud.nu[rim] * cloud.x[rim]).sum(axis=1)
    assert np.all(out > 0)


def test_hemisphere_and_annulus_geometry():
    hemi = sample_hemisphere(0.2)
    assert np.all(hemi.x[:, 0] <= 1e-9)
    ann = sample_spherical_annulus(0.1)
    rho = np.sqrt(ann.x[:, 1] ** 2 + ann.x[:, 2] ** 2)
    assert rho.min() > 0.3 - 0.05
    assert rho.max() < 0.5 + 0.05
    assert np.allclose(np.linalg.norm(ann.x, axis=1), 1.0, atol=1e-9)
    assert (ann.label == Label.FREE_BOUNDARY).any()


def test_torus_on_surface():
    cloud = sample_torus(0.2)
    rho = np.sqrt(cloud.x[:, 0] ** 2 + cloud.x[:, 1] ** 2)
    implicit = (rho - 0.75) ** 2 + cloud.x[:, 2] ** 2
    assert np.allclose(implicit, 0.25 ** 2, atol=1e-9)


def test_droplet_on_cylinder_population():
    cloud = sample_droplet_on_cylinder(0.5)
    # paper-scale droplet: roughly 140 points at this resolution
    assert 100 <= len(cloud) <= 180
    # droplet points satisfy both surfaces
    r = np.sqrt(cloud.x[:, 1] ** 2 + cloud.x[:, 2] ** 2)
    assert np.allclose(r, 0.5, atol=1e-9)
    inside = (cloud.x[:, 0] ** 2 + cloud.x[:, 1] ** 2
              + (cloud.x[:, 2] - 0.5) ** 2)
    assert np.all(inside <= 1.0 + 1e-6)


def test_obj_vertex_ingestion(tmp_path):
    path = tmp_path / "tri.obj"
    path.write_text("# tri\nv 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\n"
                    "f 1 2 3\nf 2 4 3\n")
    cloud = load_vertices(path, h=2.0)
    assert len(cloud) == 4
    assert np.allclose(np.abs(cloud.n[:, 2]), 1.0, atol=1e-9)


def test_ply_vertex_ingestion(tmp_path):
    path = tmp_path / "quad.ply"
    path.write_text(
        "ply\nformat ascii 1.0\nelement vertex 3\n"
        "property float x\nproperty float y\nproperty float z\n"
        "element face 1\nproperty list uchar int vertex_indices\n"
        "end_header\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n")
    cloud = load_vertices(path, h=2.0)
    assert len(cloud) == 3
    assert np.allclose(cloud.x[1], [1, 0, 0])


def test_unknown_format_rejected(tmp_path):
    path = tmp_path / "data.stl"
    path.write_text("solid nope\n")
    with pytest.raises(Exception):
        load_vertices(path, h=1.0)
