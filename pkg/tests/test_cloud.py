"""Point-cloud container: neighborhoods, labels, subset/append."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surfflow.cloud import (Label, PointCloud, is_boundary, is_fixed,
                            MIN_NEIGHBORS)
from surfflow.errors import FewNeighbors
from surfflow.sampling import sample_plane


def brute_force_neighbors(x, h, i):
    d = np.linalg.norm(x - x[i], axis=1)
    return set(np.flatnonzero(d <= h[i]).tolist())


def test_neighborhoods_match_brute_force(rng):
    x = rng.uniform(-1, 1, size=(80, 3))
    x[:, 2] = 0.0
    cloud = PointCloud(x, h=np.full(80, 0.8))
    nbr, cnt = cloud.neighborhoods()
    for i in range(len(cloud)):
        got = set(nbr[i, :cnt[i]].tolist())
        assert got == brute_force_neighbors(x, cloud.h, i)
        # center must come first for kernel addressing
        assert nbr[i, 0] == i


def test_neighborhood_radius_is_per_point(rng):
    x = rng.uniform(-1, 1, size=(60, 3))
    h = rng.uniform(0.9, 1.4, size=60)
    cloud = PointCloud(x, h=h)
    nbr, cnt = cloud.neighborhoods()
    for i in range(60):
        d = np.linalg.norm(x[nbr[i, :cnt[i]]] - x[i], axis=1)
        assert np.all(d <= h[i] + 1e-12)


def test_too_few_neighbors_raises():
    x = np.array([[0.0, 0, 0], [10.0, 0, 0], [20.0, 0, 0],
                  [30.0, 0, 0], [40.0, 0, 0], [50.0, 0, 0]])
    cloud = PointCloud(x, h=np.ones(6))
    with pytest.raises(FewNeighbors) as err:
        cloud.neighborhoods()
    assert err.value.count < MIN_NEIGHBORS


def test_label_predicates():
    labels = np.array([Label.INTERIOR, Label.FREE_BOUNDARY, Label.INFLOW,
                       Label.OUTFLOW, Label.SLIP, Label.DIRICHLET],
                      dtype=np.int8)
    assert is_boundary(labels).tolist() == [False, True, True, True, True,
                                            True]
    assert is_fixed(labels).tolist() == [False, False, True, True, True,
                                         True]


def test_subset_and_append_roundtrip():
    cloud = sample_plane(0.5)
    cloud.extra["tag"] = np.arange(len(cloud), dtype=float)
    keep = np.zeros(len(cloud), dtype=bool)
    keep[::2] = True
    sub = cloud.subset(keep)
    assert len(sub) == keep.sum()
    assert np.array_equal(sub.x, cloud.x[keep])
    assert np.array_equal(sub.extra["tag"], cloud.extra["tag"][keep])
    rest = cloud.subset(~keep)
    both = sub.append(rest)
    assert len(both) == len(cloud)
    assert set(map(tuple, both.x)) == set(map(tuple, cloud.x))


def test_copy_is_deep():
    cloud = sample_plane(0.5)
    dup = cloud.copy()
    dup.x[0] = 99.0
    dup.v[0] = 7.0
    assert cloud.x[0, 0] != 99.0
    assert cloud.v[0, 0] != 7.0


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=10**6))
def test_query_radius_subset_of_box(seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, size=(40, 3))
    cloud = PointCloud(x, h=np.ones(40))
    center = rng.uniform(-1, 1, size=3)
    r = rng.uniform(0.1, 1.0)
    idx = cloud.query_radius(center, r)
    d = np.linalg.norm(x - center, axis=1)
    assert set(idx.tolist()) == set(np.flatnonzero(d <= r).tolist())
