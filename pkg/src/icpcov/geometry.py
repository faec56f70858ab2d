"""Rigid transforms and small-motion algebra in 2D and 3D.

A small motion is a flat vector ordered rotation block first:
``(theta, tx, ty)`` in 2D and ``(rx, ry, rz, tx, ty, tz)`` in 3D.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch

# 2D rotation generator: J @ p is p turned by +90 degrees.
J2 = np.array([[0.0, -1.0], [1.0, 0.0]])


def motion_size(dim: int) -> int:
    if dim == 2:
        return 3
    if dim == 3:
        return 6
    raise DimensionMismatch(f"unsupported dimension {dim}")


def motion_dim(x) -> int:
    """Ambient dimension implied by a motion vector's length."""
    n = np.shape(x)[-1]
    if n == 3:
        return 2
    if n == 6:
        return 3
    raise DimensionMismatch(f"motion vector must have length 3 or 6, got {n}")


def split_motion(x):
    """Return ``(x_R, x_T)``; ``x_R`` is a scalar in 2D."""
    x = np.asarray(x, dtype=float)
    if motion_dim(x) == 2:
        return x[0], x[1:3]
    return x[:3], x[3:6]


def skew(a) -> np.ndarray:
    """3x3 matrix with ``skew(a) @ b == cross(a, b)``."""
    a1, a2, a3 = np.asarray(a, dtype=float)
    return np.array([[0.0, -a3, a2], [a3, 0.0, -a1], [-a2, a1, 0.0]])


def rotation_action(x_R, p) -> np.ndarray:
    """Infinitesimal rotation of points: ``x_R x p`` (``theta * J p`` in 2D).

    ``p`` may be a single point or an ``(n, dim)`` array.
    """
    p = np.asarray(p, dtype=float)
    if p.shape[-1] == 2:
        return float(x_R) * (p @ J2.T)
    return np.cross(np.asarray(x_R, dtype=float), p)


def apply_small_motion(x, p) -> np.ndarray:
    """First-order action of a motion near identity: ``p + x_R x p + x_T``."""
    p = np.asarray(p, dtype=float)
    if motion_dim(x) != p.shape[-1]:
        raise DimensionMismatch(
            f"motion of length {np.shape(x)[-1]} applied to {p.shape[-1]}D points"
        )
    x_R, x_T = split_motion(x)
    return p + rotation_action(x_R, p) + x_T


@dataclass(frozen=True)
class RigidTransform:
    """``p -> rotation @ p + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float)
        t = np.array(self.translation, dtype=float).reshape(-1)
        if R.shape != (t.size, t.size) or t.size not in (2, 3):
            raise DimensionMismatch(f"rotation {R.shape} incompatible with translation {t.shape}")
        R.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls, dim: int) -> "RigidTransform":
        return cls(np.eye(dim), np.zeros(dim))

    @classmethod
    def from_matrix(cls, M) -> "RigidTransform":
        M = np.asarray(M, dtype=float)
        n = M.shape[0] - 1
        return cls(M[:n, :n], M[:n, n])

    @property
    def dim(self) -> int:
        return self.translation.size

    def apply(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if p.shape[-1] != self.dim:
            raise DimensionMismatch(f"{self.dim}D transform applied to {p.shape[-1]}D points")
        return p @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """``self ∘ other``: apply ``other`` first."""
        return RigidTransform(
            self.rotation @ other.rotation, self.rotation @ other.translation + self.translation
        )

    __matmul__ = compose

    def inverse(self) -> "RigidTransform":
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation)

    def as_matrix(self) -> np.ndarray:
        M = np.eye(self.dim + 1)
        M[: self.dim, : self.dim] = self.rotation
        M[: self.dim, self.dim] = self.translation
        return M


def apply_transform(T: RigidTransform, p) -> np.ndarray:
    return T.apply(p)


def _rotation_coeffs(theta: float):
    # sin(t)/t, (1-cos t)/t^2, (t - sin t)/t^3 with series near zero
    if theta < 1e-4:
        t2 = theta * theta
        return 1.0 - t2 / 6.0, 0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0
    s, c = np.sin(theta), np.cos(theta)
    return s / theta, (1.0 - c) / theta**2, (theta - s) / theta**3


def exp_motion(x) -> RigidTransform:
    """Exact group exponential of a motion vector (Rodrigues in 3D)."""
    x = np.asarray(x, dtype=float)
    x_R, x_T = split_motion(x)
    if motion_dim(x) == 2:
        th = float(x_R)
        c, s = np.cos(th), np.sin(th)
        R = np.array([[c, -s], [s, c]])
        a, b, _ = _rotation_coeffs(abs(th))
        b = b * th
        V = np.array([[a, -b], [b, a]])
        return RigidTransform(R, V @ x_T)
    theta = float(np.linalg.norm(x_R))
    a, b, c = _rotation_coeffs(theta)
    K = skew(x_R)
    K2 = K @ K
    R = np.eye(3) + a * K + b * K2
    V = np.eye(3) + b * K + c * K2
    return RigidTransform(R, V @ x_T)


def log_motion(T: RigidTransform) -> np.ndarray:
    """Inverse of :func:`exp_motion` for rotation angles below pi.

    Used to express ICP estimate errors in motion coordinates.
    """
    if T.dim == 2:
        th = float(np.arctan2(T.rotation[1, 0], T.rotation[0, 0]))
        a, b, _ = _rotation_coeffs(abs(th))
        b = b * th
        V = np.array([[a, -b], [b, a]])
        return np.concatenate([[th], np.linalg.solve(V, T.translation)])
    R = T.rotation
    cos_t = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    theta = float(np.arccos(cos_t))
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if theta < 1e-4:
        x_R = 0.5 * (1.0 + theta**2 / 6.0) * w
    elif np.pi - theta < 1e-6:
        # axis from the symmetric part when sin(theta) vanishes
        B = (R + np.eye(3)) / 2.0
        k = int(np.argmax(np.diag(B)))
        axis = B[:, k] / np.sqrt(B[k, k])
        x_R = theta * axis
    else:
        x_R = theta / (2.0 * np.sin(theta)) * w
    a, b, c = _rotation_coeffs(float(np.linalg.norm(x_R)))
    K = skew(x_R)
    V = np.eye(3) + b * K + c * (K @ K)
    return np.concatenate([x_R, np.linalg.solve(V, T.translation)])
