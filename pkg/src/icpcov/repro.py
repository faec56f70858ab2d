"""Reproduction suite: the wall, Hessian, curvature-bound and Monte Carlo experiments.

Each check returns a :class:`Check` with the measured quantities, so the
``repro`` command can emit a machine-readable pass/fail manifest.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .covariance import build_system, covariance_iid, hessian
from .geometry import motion_size, rotation_action, split_motion
from .landscape import fixed_matching_cost, flat_exactness, remainder_decay, true_icp_cost, verify_taylor_bound
from .matching import nearest_neighbor_match
from .montecarlo import TrialConfig, closed_form, compare_cov, empirical_covariance, run_trials
from .scenes import (
    NoiseModel,
    PointCloud,
    SceneSpec,
    gen_arc_2d,
    gen_corner_3d,
    gen_plane_wall_3d,
    gen_sphere_patch_3d,
    gen_wall_2d,
    sphere_geodesic_gap,
)


@dataclass
class Check:
    name: str
    passed: bool
    measured: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}"

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "measured": self.measured, "seconds": self.seconds}


def interior_mask(n: int, margin: int) -> np.ndarray:
    return np.arange(margin, n - margin)


def subspace_angle(U: np.ndarray, W: np.ndarray) -> float:
    """Largest principal angle between the column spans of orthonormal ``U`` and ``W``.

    Computed from the sine (residual of ``U`` off ``span W``), which stays
    accurate for tiny angles where ``arccos`` of the cosine does not.
    """
    if U.shape[1] != W.shape[1]:
        return math.pi / 2
    resid = U - W @ (W.T @ U)
    return float(np.arcsin(min(1.0, np.linalg.norm(resid, 2))))


def scaled_motions(scene: PointCloud, rng: np.random.Generator, count: int, max_disp: float, min_disp: float = 0.0):
    """Random motions rescaled so ``max_i ||x_R x a_i + x_T||`` is uniform in ``[min_disp, max_disp]``."""
    k = motion_size(scene.dim)
    out = []
    for _ in range(count):
        x = rng.normal(size=k)
        x_R, x_T = split_motion(x)
        worst = np.max(np.linalg.norm(rotation_action(x_R, scene.points) + x_T, axis=1))
        out.append(x * (rng.uniform(min_disp, max_disp) / worst))
    return out


def tangential_grid(t_max: float, step: float, dim: int = 2) -> np.ndarray:
    ts = np.round(np.arange(0.0, t_max + step / 2, step) / step) * step
    grid = np.zeros((ts.size, motion_size(dim)))
    grid[:, motion_size(dim) - dim] = ts
    return grid


def _timed(fn):
    def wrapper(*a, **kw):
        t0 = time.perf_counter()
        chk = fn(*a, **kw)
        chk.seconds = time.perf_counter() - t0
        return chk

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_timed
def check_wall_hessians(n_h=3, n_v=3, width_h=2.0, width_v=2.0, depth=1.0) -> Check:
    """Plane wall: point-to-plane Hessian has a 3D null space, point-to-point is full rank."""
    w = gen_plane_wall_3d(n_h, n_v, width_h, width_v, depth)
    c = nearest_neighbor_match(w, w, np.zeros(6))
    plane = hessian(build_system("p2plane", w, c, w))
    point = hessian(build_system("p2p", w, c, w))
    angle = subspace_angle(plane.null_basis, np.eye(6)[:, 2:5])
    ok = plane.numerical_rank == 3 and angle <= 1e-8 and point.numerical_rank == 6
    return Check(
        "plane-wall Hessians",
        ok,
        {
            "p2plane_eigenvalues": plane.eigenvalues.tolist(),
            "p2plane_rank": plane.numerical_rank,
            "null_space_angle": angle,
            "p2p_eigenvalues": point.eigenvalues.tolist(),
            "p2p_rank": point.numerical_rank,
        },
    )


@_timed
def check_wall_landscape(n=10, spacing=1.0, margin=2, t_max=2.0, step=0.05) -> Check:
    """Collinear wall: rematched cost is periodic, frozen-matching cost is a parabola."""
    wall = gen_wall_2d(n, spacing)
    mask = interior_mask(n, margin)
    frozen = nearest_neighbor_match(wall, wall, np.zeros(3), mask)
    grid = tangential_grid(t_max * spacing, step * spacing)
    true = np.array([true_icp_cost(wall, wall, g, "p2p", mask) for g in grid])
    fixed = np.array([fixed_matching_cost(wall, wall, g, frozen, "p2p") for g in grid])
    t = grid[:, 1]
    per = int(round(spacing / (step * spacing)))
    period_dev = float(np.max(np.abs(true[per:] - true[: len(true) - per])))
    parabola_dev = float(np.max(np.abs(fixed - mask.size * t**2)))
    at_one = int(np.argmin(np.abs(t - spacing)))
    ok = true[at_one] <= 1e-20 and abs(fixed[at_one] - mask.size * spacing**2) == 0 and period_dev <= 1e-12 and parabola_dev <= 1e-12
    return Check(
        "wall landscape (rematched vs frozen)",
        ok,
        {
            "n_interior": int(mask.size),
            "true_at_one_spacing": float(true[at_one]),
            "fixed_at_one_spacing": float(fixed[at_one]),
            "period_deviation": period_dev,
            "parabola_deviation": parabola_dev,
        },
    )


def _bound_sweep(scene, motions, gap_fn=None) -> dict:
    worst, bound_v, lemma_v, cond_fail, remat = 0.0, 0, 0, 0, 0
    for x in motions:
        rep = verify_taylor_bound(scene, x, gap_fn)
        worst = max(worst, rep.max_ratio)
        bound_v += rep.bound_violations + rep.no_rematch_violations
        lemma_v += rep.lemma_violations
        cond_fail += rep.condition_failures
        remat += int(np.sum(rep.rematched))
    return {
        "motions": len(motions),
        "max_psi_over_bound": worst,
        "bound_violations": bound_v,
        "lemma_violations": lemma_v,
        "condition_failures": cond_fail,
        "rematched_points": remat,
    }


@_timed
def check_circle_bound(count=20, max_disp=0.3, seed=11) -> Check:
    """Unit circle sampled every 0.01 rad: |psi| <= 8 kappa disp^2 and the abscissa lemma."""
    circle = gen_arc_2d(1.0, round(2 * math.pi / 0.01), 2 * math.pi)
    motions = scaled_motions(circle, np.random.default_rng(seed), count, max_disp, 0.01)
    m = _bound_sweep(circle, motions)
    ok = m["bound_violations"] == 0 and m["lemma_violations"] == 0 and m["condition_failures"] == 0
    return Check("curvature bound on circle", ok, m)


@_timed
def check_sphere_bound(count=20, max_disp=0.15, seed=12) -> Check:
    """Sphere patch: same bound with kappa the maximum principal curvature."""
    patch = gen_sphere_patch_3d(1.0, 41, 0.5)
    motions = scaled_motions(patch, np.random.default_rng(seed), count, max_disp, 0.01)
    m = _bound_sweep(patch, motions, sphere_geodesic_gap(1.0))
    ok = m["bound_violations"] == 0 and m["lemma_violations"] == 0 and m["condition_failures"] == 0
    return Check("curvature bound on sphere patch", ok, m)


@_timed
def check_remainder_decay(eps=0.02, directions=10, seed=13, min_ratio=6.4) -> Check:
    """Point-to-plane on the circle: |true - quadratic| shrinks at least cubically."""
    circle = gen_arc_2d(1.0, round(2 * math.pi / 0.01), 2 * math.pi)
    rng = np.random.default_rng(seed)
    ratios, remat_ok = [], True
    for _ in range(directions):
        rep = remainder_decay(circle, circle, rng.normal(size=3), eps)
        ratios.extend(rep.ratios.tolist())
        remat_ok &= bool(np.all(rep.rematched > 0))
    ok = remat_ok and min(ratios) >= min_ratio
    return Check("second-order remainder decay", ok, {"eps": eps, "min_ratio": min(ratios), "ratios": ratios, "rematching_at_all_levels": remat_ok})


@_timed
def check_flat_exactness(count=200, seed=14) -> Check:
    """Piecewise-planar scenes: rematched and frozen point-to-plane costs agree."""
    rng = np.random.default_rng(seed)
    worst, used, skipped = 0.0, 0, 0
    for scene in (gen_plane_wall_3d(), gen_corner_3d(25, 1.0)):
        rel, sk = flat_exactness(scene, scaled_motions(scene, rng, count, 0.15))
        skipped += sk
        used += rel.size
        worst = max(worst, float(rel.max()) if rel.size else 0.0)
    return Check("zero-curvature exactness", worst <= 1e-12 and used > 0, {"max_rel_diff": worst, "in_bound": used, "out_of_bound": skipped})


def corner_trial_config(trials: int, seed: int = 0, extent: float = 1.0) -> TrialConfig:
    return TrialConfig(
        SceneSpec("corner3d", {"points_per_face": 25, "extent": extent}),
        NoiseModel(1e-3 * extent, seed=seed),
        trials=trials,
        estimator="p2plane-step",
    )


@_timed
def check_corner_montecarlo(trial_counts=(250, 1000, 4000), seed=0, max_error=0.15, workers=1) -> Check:
    """Corner scene: empirical covariance of a single point-to-plane step vs sigma^2 A^-1."""
    errs = {}
    for n in trial_counts:
        cfg = corner_trial_config(n, seed)
        out = run_trials(cfg, workers)
        cf, _ = closed_form(cfg)
        errs[n] = compare_cov(empirical_covariance(out.errors, cf.observable_basis), cf).frobenius_rel_error
    vals = [errs[n] for n in trial_counts]
    ok = errs[1000] <= max_error and all(a > b for a, b in zip(vals, vals[1:]))
    return Check("corner Monte Carlo vs closed form", ok, {"frobenius_rel_error": {str(k): v for k, v in errs.items()}})


def wall_fallacy_config(n: int = 20, trials: int = 1000, seed: int = 99) -> TrialConfig:
    return TrialConfig(
        SceneSpec("wall2d", {"n": n, "spacing": 1.0}),
        NoiseModel(0.25, seed=seed),
        trials=trials,
        estimator="icp-p2p",
        phase_jitter=1.0,
    )


def wall_fallacy_ratio(cfg: TrialConfig, workers: int = 1) -> dict:
    out = run_trials(cfg, workers)
    cf, rep = closed_form(cfg)
    emp = empirical_covariance(out.errors)
    pred = cf.full()
    tx = motion_size(2) - 2
    return {
        "empirical_tangential_variance": float(emp[tx, tx]),
        "predicted_tangential_variance": float(pred[tx, tx]),
        "ratio": float(emp[tx, tx] / pred[tx, tx]),
        "p2p_rank": rep.numerical_rank,
        "rematch_rate": out.rematch_rate,
        "failures": out.failures,
    }


@_timed
def check_wall_fallacy(n=20, trials=1000, seed=99, min_ratio=10.0, workers=1) -> Check:
    """Wall rescans with point-to-point ICP: tangential spread dwarfs the sigma^2 A^-1 prediction."""
    m = wall_fallacy_ratio(wall_fallacy_config(n, trials, seed), workers)
    return Check("point-to-point covariance on wall", m["ratio"] >= min_ratio, m)


ALL_CHECKS = (
    check_wall_hessians,
    check_wall_landscape,
    check_circle_bound,
    check_sphere_bound,
    check_remainder_decay,
    check_flat_exactness,
    check_corner_montecarlo,
    check_wall_fallacy,
)


_PARALLEL = {check_corner_montecarlo, check_wall_fallacy}


def run_all(workers: int = 1) -> list[Check]:
    return [fn(workers=workers) if fn in _PARALLEL else fn() for fn in ALL_CHECKS]
