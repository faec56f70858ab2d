"""Point-to-point and point-to-plane ICP."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .covariance import build_p2plane_system, check_variant, solve_ls
from .errors import DegenerateConfiguration, DimensionMismatch, InvalidArgument, MissingNormals
from .geometry import RigidTransform, exp_motion, log_motion
from .matching import Correspondences, Pose, move_points, nearest_neighbor_match, reject_pairs
from .scenes import PointCloud

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class IcpConfig:
    """Loop settings.

    ``transform_tolerance`` bounds the norm of the per-iteration motion
    update, mixing radians and length units with unit weights, so it is
    unit dependent.
    """

    variant: str = "p2plane"
    max_iterations: int = 100
    transform_tolerance: float = 1e-10
    rejection_distance: float | None = None

    def __post_init__(self):
        check_variant(self.variant)
        if self.max_iterations < 1:
            raise InvalidArgument("max_iterations must be >= 1")
        if not self.transform_tolerance > 0:
            raise InvalidArgument("transform_tolerance must be > 0")
        if self.rejection_distance is not None and not self.rejection_distance > 0:
            raise InvalidArgument("rejection_distance must be > 0")


@dataclass
class IcpResult:
    estimate: RigidTransform
    final_matching: Correspondences
    cost_trace: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    last_update: float = float("nan")

    def to_dict(self) -> dict:
        return {
            "estimate": {
                "rotation": self.estimate.rotation.tolist(),
                "translation": self.estimate.translation.tolist(),
                "motion": log_motion(self.estimate).tolist(),
            },
            "cost_trace": list(self.cost_trace),
            "iterations": self.iterations,
            "converged": self.converged,
            "last_update": self.last_update,
            "matched_pairs": len(self.final_matching),
        }


def matched_cost(variant: str, source: PointCloud, target: PointCloud, c: Correspondences, pose: Pose) -> float:
    """Cost of a frozen matching with the source moved by ``pose``."""
    r = move_points(pose, source.points[c.source_idx]) - target.points[c.target_idx]
    if variant == "p2p":
        return float(np.sum(r * r))
    if target.normals is None:
        raise MissingNormals("point-to-plane requires target normals")
    proj = np.sum(r * target.normals[c.target_idx], axis=1)
    return float(np.sum(proj * proj))


def solve_point_to_point_step(c: Correspondences, source: PointCloud, target: PointCloud) -> RigidTransform:
    """Closed-form argmin over rigid ``X`` of ``sum ||X p_k - q_pi(k)||^2`` (Kabsch)."""
    P = source.points[c.source_idx]
    Q = target.points[c.target_idx]
    dim = P.shape[1]
    if len(P) < dim:
        raise DegenerateConfiguration(f"need at least {dim} pairs, got {len(P)}")
    p0, q0 = P.mean(axis=0), Q.mean(axis=0)
    H = (P - p0).T @ (Q - q0)
    U, S, Vt = np.linalg.svd(H)
    # 2D: any nonzero cross-covariance fixes the rotation; 3D needs rank >= 2
    needed = 0 if dim == 2 else 1
    if S[0] == 0 or S[needed] <= 1e-10 * S[0]:
        raise DegenerateConfiguration(f"cross-covariance singular values {S} leave the rotation free")
    D = np.eye(dim)
    D[-1, -1] = np.sign(np.linalg.det(Vt.T @ U.T))
    R = Vt.T @ D @ U.T
    return RigidTransform(R, q0 - R @ p0)


def solve_point_to_plane_step(c: Correspondences, source: PointCloud, target: PointCloud) -> np.ndarray:
    """Linearized point-to-plane increment at the matching's pose.

    Raises :class:`~icpcov.errors.SingularSystem` (with the null basis)
    when the scene leaves some motion direction unconstrained.
    """
    return solve_ls(build_p2plane_system(source, c, target))


def run_icp(
    source: PointCloud,
    target: PointCloud,
    config: IcpConfig | None = None,
    initial: RigidTransform | None = None,
    indices=None,
    workers: int = 1,
) -> IcpResult:
    """Alternate closest-point matching and the variant's minimization step.

    The returned estimate maps source points onto the target. Point-to-plane
    increments are composed on the left through the exact exponential and
    residuals are always recomputed from the composed transform.
    """
    config = config or IcpConfig()
    if source.dim != target.dim:
        raise DimensionMismatch(f"source is {source.dim}D, target is {target.dim}D")
    if config.variant == "p2plane" and target.normals is None:
        raise MissingNormals("point-to-plane ICP requires target normals")
    X = initial if initial is not None else RigidTransform.identity(source.dim)
    result = IcpResult(X, None)  # type: ignore[arg-type]
    for it in range(1, config.max_iterations + 1):
        c = nearest_neighbor_match(source, target, X, indices, workers=workers)
        if config.rejection_distance is not None:
            c = reject_pairs(c, config.rejection_distance)
        if config.variant == "p2p":
            X_new = solve_point_to_point_step(c, source, target)
            update = float(np.linalg.norm(log_motion(X_new @ X.inverse())))
        else:
            x = solve_point_to_plane_step(c, source, target)
            X_new = exp_motion(x) @ X
            update = float(np.linalg.norm(x))
        result.cost_trace.append(matched_cost(config.variant, source, target, c, X_new))
        X = X_new
        result.iterations = it
        result.last_update = update
        if update < config.transform_tolerance:
            result.converged = True
            break
    else:
        log.info("ICP stopped after %d iterations (last update %.3g)", config.max_iterations, update)
    result.estimate = X
    result.final_matching = nearest_neighbor_match(source, target, X, indices, workers=workers)
    if config.rejection_distance is not None:
        result.final_matching = reject_pairs(result.final_matching, config.rejection_distance)
    return result
