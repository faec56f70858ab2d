"""Exact closest-point correspondences with smallest-index tie-breaking."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.spatial import cKDTree

from .errors import DimensionMismatch, InvalidArgument
from .geometry import RigidTransform, apply_small_motion
from .scenes import PointCloud

Pose = Union[RigidTransform, np.ndarray, None]


def move_points(pose: Pose, points: np.ndarray) -> np.ndarray:
    """Apply a pose to points.

    A :class:`RigidTransform` acts exactly; a motion vector acts to first
    order (``p + x_R x p + x_T``), which is the convention of the
    fixed-matching cost models.
    """
    if pose is None:
        return np.asarray(points, dtype=float)
    if isinstance(pose, RigidTransform):
        return pose.apply(points)
    return apply_small_motion(pose, points)


@dataclass(frozen=True)
class Correspondences:
    source_idx: np.ndarray
    target_idx: np.ndarray
    sqdist: np.ndarray
    transform_used: Pose = None

    def __len__(self) -> int:
        return self.source_idx.size

    @property
    def pairs(self) -> list[tuple[int, int, float]]:
        return list(zip(self.source_idx.tolist(), self.target_idx.tolist(), self.sqdist.tolist()))

    def with_transform(self, pose: Pose) -> "Correspondences":
        return Correspondences(self.source_idx, self.target_idx, self.sqdist, pose)


def _sqdist(q: np.ndarray, cands: np.ndarray) -> np.ndarray:
    # single formula shared by both matchers so ties resolve identically
    return ((cands - q) ** 2).sum(axis=-1)


def _brute_force(queries: np.ndarray, targets: np.ndarray, chunk: int = 512):
    idx = np.empty(len(queries), dtype=np.intp)
    d2 = np.empty(len(queries))
    for start in range(0, len(queries), chunk):
        q = queries[start : start + chunk]
        D = ((targets[None, :, :] - q[:, None, :]) ** 2).sum(axis=-1)
        j = np.argmin(D, axis=1)  # first occurrence = smallest index
        idx[start : start + chunk] = j
        d2[start : start + chunk] = D[np.arange(len(q)), j]
    return idx, d2


def _kdtree(queries: np.ndarray, targets: np.ndarray, tree: cKDTree | None = None, workers: int = 1):
    tree = tree if tree is not None else cKDTree(targets)
    dist, _ = tree.query(queries, k=1, workers=workers)
    scale = 1.0 + np.abs(queries).max(axis=1)
    radius = dist * (1.0 + 1e-9) + 1e-14 * scale
    balls = tree.query_ball_point(queries, radius, workers=workers)
    idx = np.empty(len(queries), dtype=np.intp)
    d2 = np.empty(len(queries))
    for k, cand in enumerate(balls):
        cand = np.sort(np.asarray(cand, dtype=np.intp))
        D = _sqdist(queries[k], targets[cand])
        m = int(np.argmin(D))
        idx[k] = cand[m]
        d2[k] = D[m]
    return idx, d2


def match_points(queries, targets, method: str = "kdtree", workers: int = 1):
    """Index and squared distance of the nearest target for each query."""
    queries = np.asarray(queries, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if queries.shape[-1] != targets.shape[-1]:
        raise DimensionMismatch(f"{queries.shape[-1]}D queries against {targets.shape[-1]}D targets")
    if method == "brute":
        return _brute_force(queries, targets)
    if method == "kdtree":
        return _kdtree(queries, targets, workers=workers)
    raise InvalidArgument(f"unknown matching method {method!r}")


def nearest_neighbor_match(
    source: PointCloud,
    target: PointCloud,
    x: Pose = None,
    indices=None,
    method: str = "kdtree",
    workers: int = 1,
) -> Correspondences:
    """Match every selected source point, moved by ``x``, to its closest target point.

    ``indices`` restricts matching to a subset of source points (default all).
    """
    if source.dim != target.dim:
        raise DimensionMismatch(f"source is {source.dim}D, target is {target.dim}D")
    src_idx = np.arange(len(source)) if indices is None else np.asarray(indices, dtype=np.intp)
    moved = move_points(x, source.points[src_idx])
    j, d2 = match_points(moved, target.points, method=method, workers=workers)
    return Correspondences(src_idx, j, d2, x)


def reject_pairs(c: Correspondences, max_dist: float) -> Correspondences:
    """Keep pairs no farther apart than ``max_dist``; order is preserved."""
    if not max_dist > 0:
        raise InvalidArgument("max_dist must be > 0")
    keep = c.sqdist <= max_dist * max_dist
    return Correspondences(c.source_idx[keep], c.target_idx[keep], c.sqdist[keep], c.transform_used)
