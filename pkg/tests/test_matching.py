import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from icpcov.errors import DimensionMismatch, InvalidArgument
from icpcov.geometry import RigidTransform
from icpcov.matching import match_points, nearest_neighbor_match, reject_pairs
from icpcov.scenes import PointCloud, gen_corner_3d, gen_wall_2d
from oracles import brute_nn


def test_identity_matches_self():
    c = gen_corner_3d(9)
    m = nearest_neighbor_match(c, c)
    np.testing.assert_array_equal(m.target_idx, np.arange(len(c)))
    np.testing.assert_array_equal(m.sqdist, 0.0)


def test_wall_translation_rematches_right_neighbor():
    w = gen_wall_2d(10, 1.0)
    m = nearest_neighbor_match(w, w, np.array([0.0, 0.6, 0.0]), indices=np.arange(1, 9))
    np.testing.assert_array_equal(m.target_idx, np.arange(2, 10))


def test_tie_breaks_to_smallest_index():
    targets = PointCloud(np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]]))
    src = PointCloud(np.array([[0.0, 0.0]]))
    for method in ("kdtree", "brute"):
        assert nearest_neighbor_match(src, targets, method=method).target_idx[0] == 0


def test_duplicate_targets_resolve_to_smallest_index():
    targets = np.array([[3.0, 3.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]])
    j, _ = match_points(np.array([[0.1, 0.0]]), targets)
    assert j[0] == 1


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        nearest_neighbor_match(gen_wall_2d(), gen_corner_3d(4))
    with pytest.raises(InvalidArgument):
        match_points(np.zeros((1, 2)), np.zeros((1, 2)), method="annoy")


def _cloud_pair(rng, case):
    dim = int(rng.integers(2, 4))
    n, m = int(rng.integers(1, 200)), int(rng.integers(1, 200))
    if case % 2 == 0:
        # integer lattices produce many exact ties
        q = rng.integers(-4, 5, size=(n, dim)).astype(float) + rng.choice([0.0, 0.5], size=(n, dim))
        t = rng.integers(-4, 5, size=(m, dim)).astype(float)
    else:
        q, t = rng.normal(size=(n, dim)), rng.normal(size=(m, dim))
    return q, t


def test_kdtree_matches_brute_force_on_50_pairs():
    rng = np.random.default_rng(7)
    for case in range(50):
        q, t = _cloud_pair(rng, case)
        j_ref, d_ref = brute_nn(q, t)
        for method in ("kdtree", "brute"):
            j, d = match_points(q, t, method=method)
            np.testing.assert_array_equal(j, j_ref)
            np.testing.assert_array_equal(d, d_ref)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_kdtree_equals_brute_property(seed):
    q, t = _cloud_pair(np.random.default_rng(seed), seed)
    j1, d1 = match_points(q, t, "kdtree")
    j2, d2 = match_points(q, t, "brute")
    np.testing.assert_array_equal(j1, j2)
    np.testing.assert_array_equal(d1, d2)


def test_workers_do_not_change_result():
    rng = np.random.default_rng(3)
    q, t = rng.normal(size=(500, 3)), rng.normal(size=(300, 3))
    np.testing.assert_array_equal(match_points(q, t, workers=1)[0], match_points(q, t, workers=4)[0])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_matching_is_locally_constant(seed):
    rng = np.random.default_rng(seed)
    t = rng.normal(size=(40, 3))
    src = PointCloud(t + rng.normal(size=t.shape) * 0.05)
    tgt = PointCloud(t)
    base = nearest_neighbor_match(src, tgt)
    # margin between best and second-best distance per query
    D = np.linalg.norm(src.points[:, None] - t[None], axis=2)
    D.sort(axis=1)
    margin = np.min(D[:, 1] - D[:, 0])
    r = np.max(np.linalg.norm(src.points, axis=1))
    h = 0.2 * margin / (1.0 + r)
    x = rng.normal(size=6)
    x *= h / np.linalg.norm(x)
    np.testing.assert_array_equal(nearest_neighbor_match(src, tgt, x).target_idx, base.target_idx)


def test_rigid_transform_pose_and_transform_recorded():
    w = gen_wall_2d(5)
    T = RigidTransform(np.eye(2), np.array([1.0, 0.0]))
    m = nearest_neighbor_match(w, w, T)
    np.testing.assert_array_equal(m.target_idx, [1, 2, 3, 4, 4])
    assert m.transform_used is T
    assert m.pairs[0] == (0, 1, 0.0)


def test_reject_infinite_keeps_all():
    w = gen_wall_2d()
    m = nearest_neighbor_match(w, w, np.array([0.0, 3.0, 0.0]))
    r = reject_pairs(m, np.inf)
    np.testing.assert_array_equal(r.target_idx, m.target_idx)


def test_reject_tiny_on_identical_keeps_all():
    w = gen_wall_2d()
    assert len(reject_pairs(nearest_neighbor_match(w, w), 1e-300)) == len(w)


def test_reject_wall_far_translation():
    w = gen_wall_2d(10, 1.0)
    m = nearest_neighbor_match(w, w, np.array([0.0, 10.0, 0.0]))
    # every moved point lands at x >= 10; only the last target is within one spacing
    kept = reject_pairs(m, 1.0)
    expected = [k for k in range(10) if (k + 10 - 9) <= 1.0]
    np.testing.assert_array_equal(kept.source_idx, expected)
    assert np.all(np.diff(kept.source_idx) > 0)


def test_reject_requires_positive():
    w = gen_wall_2d()
    with pytest.raises(InvalidArgument):
        reject_pairs(nearest_neighbor_match(w, w), 0.0)
