"""Cost landscapes with and without rematching, and curvature bound checks.

Motion vectors act on points to first order (``p + x_R x p + x_T``) in
this module. With that convention the fixed-matching cost is exactly
quadratic in the motion, so it doubles as the second-order model around
the anchor motion.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .covariance import check_variant
from .errors import DimensionMismatch, InvalidArgument, MissingAbscissae
from .geometry import apply_small_motion, motion_size, rotation_action, split_motion
from .icp import matched_cost
from .matching import Correspondences, match_points, nearest_neighbor_match
from .scenes import PointCloud


def true_icp_cost(source: PointCloud, target: PointCloud, x, variant: str = "p2p", indices=None) -> float:
    """Cost with closest-point rematching at ``x``."""
    check_variant(variant)
    c = nearest_neighbor_match(source, target, np.asarray(x, dtype=float), indices)
    return matched_cost(variant, source, target, c, c.transform_used)


def fixed_matching_cost(source: PointCloud, target: PointCloud, x, matching: Correspondences, variant: str = "p2p") -> float:
    """Cost at ``x`` with ``matching`` held frozen."""
    check_variant(variant)
    return matched_cost(variant, source, target, matching, np.asarray(x, dtype=float))


def polyline_cost(source: PointCloud, target_polyline: PointCloud, x) -> float:
    """Sum of squared distances from moved source points to the segment chain
    through consecutive target points (endpoint-clamped projection)."""
    if source.dim != 2 or target_polyline.dim != 2:
        raise DimensionMismatch("polyline cost is defined for 2D clouds only")
    V = target_polyline.points
    if len(V) < 2:
        raise InvalidArgument("polyline needs at least 2 vertices")
    P = apply_small_motion(np.asarray(x, dtype=float), source.points)
    a, b = V[:-1], V[1:]
    ab = b - a
    L2 = np.sum(ab * ab, axis=1)
    ap = P[:, None, :] - a[None, :, :]
    t = np.divide(np.sum(ap * ab[None], axis=2), L2[None], out=np.zeros((len(P), len(a))), where=L2[None] > 0)
    t = np.clip(t, 0.0, 1.0)
    r = ap - t[..., None] * ab[None]
    return float(np.sum(np.min(np.sum(r * r, axis=2), axis=1)))


@dataclass(frozen=True)
class LandscapeSample:
    motion: np.ndarray
    true_cost: float
    fixed_cost: float
    quadratic_cost: float


def sample_landscape(
    source: PointCloud,
    target: PointCloud,
    grid: Iterable,
    variant: str = "p2p",
    x_hat=None,
    indices=None,
) -> list[LandscapeSample]:
    """Evaluate true, fixed-matching and quadratic-model costs over ``grid``.

    The matching is frozen at ``x_hat`` (default: zero motion).
    """
    check_variant(variant)
    grid = [np.asarray(g, dtype=float) for g in grid]
    if not grid:
        raise InvalidArgument("empty landscape grid")
    k = motion_size(source.dim)
    x_hat = np.zeros(k) if x_hat is None else np.asarray(x_hat, dtype=float)
    frozen = nearest_neighbor_match(source, target, x_hat, indices)
    out = []
    for g in grid:
        if g.shape != (k,):
            raise DimensionMismatch(f"grid motion has shape {g.shape}, expected ({k},)")
        fixed = fixed_matching_cost(source, target, g, frozen, variant)
        out.append(LandscapeSample(g, true_icp_cost(source, target, g, variant, indices), fixed, fixed))
    return out


def landscape_to_csv(samples: list[LandscapeSample], path) -> None:
    """Columns ``x0..x{k-1}, true_cost, fixed_cost, quadratic_cost``."""
    k = samples[0].motion.size
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i}" for i in range(k)] + ["true_cost", "fixed_cost", "quadratic_cost"])
        for s in samples:
            w.writerow([repr(float(v)) for v in s.motion] + [repr(s.true_cost), repr(s.fixed_cost), repr(s.quadratic_cost)])


@dataclass(frozen=True)
class TaylorBoundReport:
    """Per-point rematching discrepancies for one displacement.

    ``psi[i] = (a_i - a_j) . n_i`` with ``j`` the closest scene point to the
    displaced ``a_i``; ``disp[i] = ||x_R x a_i + x_T||``.
    """

    index: np.ndarray
    matched: np.ndarray
    psi: np.ndarray
    disp: np.ndarray
    bound: np.ndarray
    gap: np.ndarray
    lemma_bound: np.ndarray
    condition: np.ndarray
    kappa: float
    atol: float

    @property
    def rematched(self) -> np.ndarray:
        return self.index != self.matched

    @property
    def bound_violations(self) -> int:
        return int(np.sum(self.condition & (np.abs(self.psi) > self.bound + self.atol)))

    @property
    def lemma_violations(self) -> int:
        return int(np.sum(self.condition & self.rematched & (self.gap > self.lemma_bound + self.atol)))

    @property
    def no_rematch_violations(self) -> int:
        return int(np.sum(~self.rematched & (self.psi != 0)))

    @property
    def condition_failures(self) -> int:
        return int(np.sum(~self.condition))

    @property
    def ok(self) -> bool:
        return self.bound_violations == 0 and self.lemma_violations == 0 and self.no_rematch_violations == 0

    @property
    def max_ratio(self) -> float:
        """Largest ``|psi| / bound`` over points with a nonzero bound."""
        nz = self.bound > 0
        if not np.any(nz):
            return 0.0
        return float(np.max(np.abs(self.psi[nz]) / self.bound[nz]))

    def to_csv(self, path) -> None:
        cols = ["index", "matched", "psi", "disp", "bound", "gap", "lemma_bound", "condition"]
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for row in zip(self.index, self.matched, self.psi, self.disp, self.bound, self.gap, self.lemma_bound, self.condition):
                w.writerow([int(row[0]), int(row[1])] + [repr(float(v)) for v in row[2:7]] + [int(row[7])])


def verify_taylor_bound(
    scene: PointCloud,
    x,
    gap_fn: Callable | None = None,
    mask=None,
    atol: float = 1e-13,
) -> TaylorBoundReport:
    """Check the rematching discrepancy bound for the scene displaced by ``x``.

    The surface separation ``|s_i - s_j|`` comes from the scene's abscissae,
    or from ``gap_fn(a_i, a_j)`` (e.g. a section arc length in 3D).
    ``atol`` absorbs floating-point rounding in the comparisons.
    """
    if gap_fn is None and scene.abscissae is None:
        raise MissingAbscissae("scene carries no abscissae and no gap function was given")
    if scene.normals is None or scene.curvature_bound is None:
        raise InvalidArgument("scene needs normals and a curvature bound")
    x = np.asarray(x, dtype=float)
    idx = np.arange(len(scene)) if mask is None else np.asarray(mask, dtype=np.intp)
    a = scene.points[idx]
    x_R, x_T = split_motion(x)
    delta = rotation_action(x_R, a) + x_T
    j, _ = match_points(a + delta, scene.points)
    psi = np.sum((a - scene.points[j]) * scene.normals[idx], axis=1)
    disp = np.linalg.norm(delta, axis=1)
    kappa = float(scene.curvature_bound)
    gap = gap_fn(a, scene.points[j]) if gap_fn is not None else scene.abscissa_gap(idx, j)
    gap = np.where(idx == j, 0.0, gap)
    return TaylorBoundReport(
        index=idx,
        matched=j,
        psi=psi,
        disp=disp,
        bound=8.0 * kappa * disp**2,
        gap=gap,
        lemma_bound=4.0 * disp,
        condition=kappa * gap <= 1.0,
        kappa=kappa,
        atol=atol,
    )


@dataclass(frozen=True)
class DecayReport:
    scales: np.ndarray
    gaps: np.ndarray
    ratios: np.ndarray
    rematched: np.ndarray

    def to_dict(self) -> dict:
        return {
            "scales": self.scales.tolist(),
            "gaps": self.gaps.tolist(),
            "ratios": self.ratios.tolist(),
            "rematched": self.rematched.tolist(),
        }


def remainder_decay(
    source: PointCloud,
    target: PointCloud,
    direction,
    eps: float,
    levels=(4, 2, 1),
    variant: str = "p2plane",
    x_hat=None,
) -> DecayReport:
    """``|true - quadratic|`` along ``x_hat + level * eps * direction``.

    ``ratios[k] = gaps[k] / gaps[k + 1]``; second-order validity with a
    cubic remainder predicts ratios near ``(level_k / level_{k+1})^3``.
    """
    k = motion_size(source.dim)
    x_hat = np.zeros(k) if x_hat is None else np.asarray(x_hat, dtype=float)
    u = np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    frozen = nearest_neighbor_match(source, target, x_hat)
    scales = np.array([lv * eps for lv in levels], dtype=float)
    gaps, remat = [], []
    for s in scales:
        xm = x_hat + s * u
        c = nearest_neighbor_match(source, target, xm)
        true = matched_cost(variant, source, target, c, xm)
        gaps.append(abs(true - fixed_matching_cost(source, target, xm, frozen, variant)))
        remat.append(int(np.sum(c.target_idx != frozen.target_idx)))
    gaps = np.array(gaps)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = gaps[:-1] / gaps[1:]
    return DecayReport(scales, gaps, ratios, np.array(remat))


def flat_exactness(scene: PointCloud, motions: Iterable, variant: str = "p2plane", plane_tol: float = 1e-12):
    """Compare true and fixed-matching costs on a piecewise-planar scene.

    A displacement is in-bound when every rematched partner lies on the
    same plane (same normal and offset) as the frozen partner. Returns
    ``(relative_differences, n_out_of_bound)`` over in-bound motions.
    """
    if scene.normals is None:
        raise InvalidArgument("scene needs normals")
    k = motion_size(scene.dim)
    frozen = nearest_neighbor_match(scene, scene, np.zeros(k))
    n, q = scene.normals, scene.points
    offsets = np.sum(n * q, axis=1)
    rel, skipped = [], 0
    for x in motions:
        x = np.asarray(x, dtype=float)
        c = nearest_neighbor_match(scene, scene, x)
        j0, j1 = frozen.target_idx, c.target_idx
        same = np.all(np.abs(n[j0] - n[j1]) <= plane_tol, axis=1) & (np.abs(offsets[j0] - offsets[j1]) <= plane_tol)
        if not np.all(same):
            skipped += 1
            continue
        true = matched_cost(variant, scene, scene, c, x)
        fixed = matched_cost(variant, scene, scene, frozen, x)
        rel.append(abs(true - fixed) / max(abs(fixed), np.finfo(float).tiny))
    return np.array(rel), skipped
