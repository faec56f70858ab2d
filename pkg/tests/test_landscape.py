import csv
import math

import numpy as np
import pytest

from icpcov.errors import DimensionMismatch, InvalidArgument, MissingAbscissae
from icpcov.landscape import (
    fixed_matching_cost,
    flat_exactness,
    landscape_to_csv,
    polyline_cost,
    remainder_decay,
    sample_landscape,
    true_icp_cost,
    verify_taylor_bound,
)
from icpcov.matching import nearest_neighbor_match
from icpcov.repro import scaled_motions, tangential_grid
from icpcov.scenes import PointCloud, gen_arc_2d, gen_corner_3d, gen_plane_wall_3d, gen_sphere_patch_3d, gen_wall_2d, sphere_geodesic_gap

WALL = gen_wall_2d(10, 1.0)
INTERIOR = np.arange(2, 8)


def _t(t):
    return np.array([0.0, t, 0.0])


def test_true_cost_zero_at_rest():
    c = gen_corner_3d(9)
    assert true_icp_cost(c, c, np.zeros(6), "p2p") == 0.0
    assert true_icp_cost(c, c, np.zeros(6), "p2plane") == 0.0


def test_wall_true_cost_at_one_and_half_spacing():
    assert true_icp_cost(WALL, WALL, _t(1.0), "p2p", INTERIOR) == 0.0
    assert true_icp_cost(WALL, WALL, _t(0.5), "p2p", INTERIOR) == pytest.approx(len(INTERIOR) * 0.25, abs=1e-15)


def test_wall_fixed_cost_is_parabola():
    frozen = nearest_neighbor_match(WALL, WALL, np.zeros(3))
    assert fixed_matching_cost(WALL, WALL, _t(1.0), frozen, "p2p") == len(WALL)
    for t in (0.3, 1.7, -2.0):
        assert fixed_matching_cost(WALL, WALL, _t(t), frozen, "p2p") == pytest.approx(len(WALL) * t * t, rel=1e-14)


def test_anchor_costs_coincide():
    arc = gen_arc_2d(1.0, 60, 2.0)
    x_hat = np.array([0.01, 0.02, -0.01])
    frozen = nearest_neighbor_match(arc, arc, x_hat)
    for variant in ("p2p", "p2plane"):
        assert true_icp_cost(arc, arc, x_hat, variant) == fixed_matching_cost(arc, arc, x_hat, frozen, variant)
    s = sample_landscape(arc, arc, [x_hat], "p2plane", x_hat)
    assert s[0].true_cost == s[0].fixed_cost == s[0].quadratic_cost


def test_true_below_fixed_for_point_to_point():
    frozen = nearest_neighbor_match(WALL, WALL, np.zeros(3), INTERIOR)
    for t in np.linspace(-2, 2, 41):
        true = true_icp_cost(WALL, WALL, _t(t), "p2p", INTERIOR)
        fixed = fixed_matching_cost(WALL, WALL, _t(t), frozen, "p2p")
        assert true <= fixed + 1e-15
        if abs(t) > 0.5 + 1e-9:
            assert true < fixed


def test_wall_landscape_periodic_over_symmetric_range():
    grid = np.array([_t(t) for t in np.round(np.arange(-2.0, 2.0001, 0.05), 10)])
    samples = sample_landscape(WALL, WALL, grid, "p2p", indices=INTERIOR)
    true = np.array([s.true_cost for s in samples])
    fixed = np.array([s.fixed_cost for s in samples])
    assert np.max(np.abs(true[20:] - true[:-20])) <= 1e-12
    np.testing.assert_allclose(fixed, len(INTERIOR) * grid[:, 1] ** 2, rtol=1e-13, atol=1e-15)


def test_plane_p2plane_landscape_flat_exact():
    w = gen_plane_wall_3d(5, 5, 2, 2, 1)
    grid = [np.array([0, 0, 0, tx, ty, tz]) for tx in (-0.3, 0.0, 0.25) for ty in (0.1, 0.6) for tz in (0.0, 0.2)]
    for s in sample_landscape(w, w, grid, "p2plane"):
        assert s.true_cost == pytest.approx(s.fixed_cost, rel=1e-12, abs=1e-18)


def test_landscape_errors_and_csv(tmp_path):
    with pytest.raises(InvalidArgument):
        sample_landscape(WALL, WALL, [], "p2p")
    with pytest.raises(DimensionMismatch):
        sample_landscape(WALL, WALL, [np.zeros(6)], "p2p")
    samples = sample_landscape(WALL, WALL, tangential_grid(1.0, 0.5), "p2p")
    path = tmp_path / "l.csv"
    landscape_to_csv(samples, path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["x0", "x1", "x2", "true_cost", "fixed_cost", "quadratic_cost"]
    assert len(rows) == 4 and float(rows[3][4]) == 10.0


def test_polyline_cost_examples():
    line = PointCloud(np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]))
    on = PointCloud(np.array([[1.5, 0.0]]))
    assert polyline_cost(on, line, np.zeros(3)) == 0.0
    above = PointCloud(np.array([[0.5, 0.3]]))
    assert polyline_cost(above, line, np.zeros(3)) == pytest.approx(0.09, abs=1e-16)
    beyond = PointCloud(np.array([[3.0, 1.0]]))
    assert polyline_cost(beyond, line, np.zeros(3)) == pytest.approx(2.0)
    assert polyline_cost(PointCloud(np.array([[0.0, 0.3]])), line, _t(0.5)) == pytest.approx(0.09)
    with pytest.raises(DimensionMismatch):
        polyline_cost(gen_corner_3d(4), gen_corner_3d(4), np.zeros(6))
    with pytest.raises(InvalidArgument):
        polyline_cost(on, PointCloud(np.array([[0.0, 0.0]])), np.zeros(3))


def test_taylor_zero_motion():
    arc = gen_arc_2d(1.0, 200, 2.0)
    rep = verify_taylor_bound(arc, np.zeros(3))
    assert not rep.rematched.any() and np.all(rep.psi == 0) and rep.ok


def test_taylor_circle_pure_translation():
    circle = gen_arc_2d(1.0, round(2 * math.pi / 0.01), 2 * math.pi)
    for angle in np.linspace(0, 2 * math.pi, 7):
        x = np.array([0.0, 0.1 * math.cos(angle), 0.1 * math.sin(angle)])
        rep = verify_taylor_bound(circle, x)
        assert np.max(np.abs(rep.psi)) <= 0.08
        assert rep.ok and rep.condition_failures == 0
        assert rep.rematched.any()


def test_taylor_straight_wall_psi_zero():
    rng = np.random.default_rng(0)
    for x in scaled_motions(WALL, rng, 10, 2.0):
        rep = verify_taylor_bound(WALL, x)
        assert np.all(rep.psi == 0)


def test_taylor_bound_detects_violation():
    # a cloud claiming zero curvature while actually curved must trip the check
    arc = gen_arc_2d(1.0, 300, 2.0)
    fake = PointCloud(arc.points, arc.normals, arc.abscissae, 0.0)
    rep = verify_taylor_bound(fake, np.array([0.0, 0.1, 0.0]))
    assert rep.bound_violations > 0 and not rep.ok


def test_taylor_requires_abscissae_or_gap_fn():
    patch = gen_sphere_patch_3d(1.0, 11, 0.3)
    with pytest.raises(MissingAbscissae):
        verify_taylor_bound(patch, np.zeros(6))
    rep = verify_taylor_bound(patch, np.array([0, 0, 0, 0.05, 0.0, 0.0]), sphere_geodesic_gap(1.0))
    assert rep.ok
    with pytest.raises(InvalidArgument):
        verify_taylor_bound(PointCloud(WALL.points, abscissae=WALL.abscissae), np.zeros(3))


def test_taylor_csv(tmp_path):
    rep = verify_taylor_bound(gen_arc_2d(1.0, 50, 1.0), np.array([0.0, 0.05, 0.0]))
    path = tmp_path / "b.csv"
    rep.to_csv(path)
    rows = list(csv.reader(path.open()))
    assert rows[0][:3] == ["index", "matched", "psi"] and len(rows) == 51


def test_remainder_decay_on_circle():
    circle = gen_arc_2d(1.0, round(2 * math.pi / 0.01), 2 * math.pi)
    rep = remainder_decay(circle, circle, [0.3, 1.0, -0.5], 0.02)
    assert rep.rematched[0] > 0
    assert np.all(rep.ratios >= 6.4)
    assert rep.to_dict()["scales"] == pytest.approx([0.08, 0.04, 0.02])


def test_flat_exactness_plane_and_corner():
    rng = np.random.default_rng(3)
    for scene in (gen_plane_wall_3d(), gen_corner_3d(25)):
        rel, skipped = flat_exactness(scene, scaled_motions(scene, rng, 30, 0.1))
        assert rel.size > 0 and rel.max() <= 1e-12
        assert rel.size + skipped == 30
