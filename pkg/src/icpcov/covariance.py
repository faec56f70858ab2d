"""Linearized least-squares systems, half Hessians and closed-form covariances.

Systems are stored so that the fixed-matching cost linearized at the
matching's pose is literally ``J(x) = sum_i ||d_i - B_i x||^2``:

* point-to-point: ``d_i = p_i - q_j``, ``B_i = [S(p_i)  -I]``
  (2D: ``B_i = [-J p_i  -I]``),
* point-to-plane: ``d_i = n_j . (p_i - q_j)``, ``B_i = [-(p_i x n_j)^T  -n_j^T]``,

where ``p_i`` is the source point moved by the pose the matching was
computed at. With these signs the minimizer ``A^-1 sum B_i^T d_i`` is the
motion to apply on top of that pose.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Literal, Union

import numpy as np

from .errors import InvalidArgument, MissingNormals, SingularSystem
from .geometry import J2, motion_size, skew
from .matching import Correspondences, move_points
from .scenes import NoiseModel, PointCloud

Variant = Literal["p2p", "p2plane"]
VARIANTS = ("p2p", "p2plane")

DEFAULT_RANK_TOL = 1e-9


def check_variant(variant: str) -> str:
    if variant not in VARIANTS:
        raise InvalidArgument(f"variant must be one of {VARIANTS}, got {variant!r}")
    return variant


@dataclass(frozen=True)
class LsSystem:
    """Rows ``(d_i, B_i)``; ``d`` has shape ``(m, r)`` and ``B`` ``(m, r, k)``."""

    d: np.ndarray
    B: np.ndarray
    variant: str

    def __len__(self) -> int:
        return self.d.shape[0]

    @property
    def n_params(self) -> int:
        return self.B.shape[2]

    def cost(self, x) -> float:
        r = self.d - self.B @ np.asarray(x, dtype=float)
        return float(np.sum(r * r))

    def gradient(self, x) -> np.ndarray:
        """Gradient of :meth:`cost`: ``2 (A x - sum B_i^T d_i)``."""
        flat_B, flat_d = self.stacked()
        return 2.0 * (flat_B.T @ (flat_B @ np.asarray(x, dtype=float) - flat_d))

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        m, r, k = self.B.shape
        return self.B.reshape(m * r, k), self.d.reshape(m * r)

    def normal_matrix(self) -> np.ndarray:
        A = np.einsum("mri,mrj->ij", self.B, self.B)
        return 0.5 * (A + A.T)

    def rhs(self) -> np.ndarray:
        return np.einsum("mri,mr->i", self.B, self.d)

    def reordered(self, order) -> "LsSystem":
        return LsSystem(self.d[order], self.B[order], self.variant)


def _pair_points(source: PointCloud, c: Correspondences, target: PointCloud):
    p = move_points(c.transform_used, source.points[c.source_idx])
    q = target.points[c.target_idx]
    return p, q


def build_p2p_system(source: PointCloud, c: Correspondences, target: PointCloud) -> LsSystem:
    p, q = _pair_points(source, c, target)
    m, dim = p.shape
    k = motion_size(dim)
    B = np.zeros((m, dim, k))
    if dim == 3:
        B[:, :, :3] = np.stack([skew(pi) for pi in p]) if m else 0.0
    else:
        B[:, :, 0] = -(p @ J2.T)
    B[:, :, k - dim :] = -np.eye(dim)
    return LsSystem(p - q, B, "p2p")


def build_p2plane_system(source: PointCloud, c: Correspondences, target: PointCloud) -> LsSystem:
    if target.normals is None:
        raise MissingNormals("point-to-plane requires target normals")
    p, q = _pair_points(source, c, target)
    n = target.normals[c.target_idx]
    m, dim = p.shape
    k = motion_size(dim)
    B = np.empty((m, 1, k))
    if dim == 3:
        B[:, 0, :3] = -np.cross(p, n)
    else:
        B[:, 0, 0] = -(p[:, 0] * n[:, 1] - p[:, 1] * n[:, 0])
    B[:, 0, k - dim :] = -n
    d = np.sum(n * (p - q), axis=1, keepdims=True)
    return LsSystem(d, B, "p2plane")


def build_system(variant: str, source: PointCloud, c: Correspondences, target: PointCloud) -> LsSystem:
    if check_variant(variant) == "p2p":
        return build_p2p_system(source, c, target)
    return build_p2plane_system(source, c, target)


@dataclass(frozen=True)
class HessianReport:
    hessian: np.ndarray
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # columns, same order
    numerical_rank: int
    null_basis: np.ndarray
    observable_basis: np.ndarray
    rank_tol: float = DEFAULT_RANK_TOL

    @property
    def observable_eigenvalues(self) -> np.ndarray:
        return self.eigenvalues[: self.numerical_rank]

    def to_dict(self) -> dict:
        return {
            "hessian": self.hessian.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "numerical_rank": self.numerical_rank,
            "rank_tol": self.rank_tol,
            "null_basis": self.null_basis.T.tolist(),
            "observable_basis": self.observable_basis.T.tolist(),
        }


def analyze_hessian(A, tol: float = DEFAULT_RANK_TOL) -> HessianReport:
    A = np.asarray(A, dtype=float)
    w, V = np.linalg.eigh(A)
    order = np.argsort(w)[::-1]
    w, V = w[order], V[:, order]
    lam_max = max(float(w[0]), 0.0) if w.size else 0.0
    rank = int(np.sum(w > tol * lam_max)) if lam_max > 0 else 0
    return HessianReport(A, w, V, rank, V[:, rank:], V[:, :rank], tol)


def hessian(sys: LsSystem, tol: float = DEFAULT_RANK_TOL) -> HessianReport:
    """Half Hessian ``A = sum B_i^T B_i`` with its spectral observability split."""
    if len(sys) == 0:
        raise InvalidArgument("empty least-squares system")
    return analyze_hessian(sys.normal_matrix(), tol)


def solve_ls(sys: LsSystem, observable_only: bool = False, tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """``x = A^-1 sum B_i^T d_i``.

    On a rank-deficient ``A`` this raises :class:`SingularSystem` unless
    ``observable_only`` is set, in which case the minimum-norm solution on
    the observable subspace is returned.
    """
    rep = hessian(sys, tol)
    b = sys.rhs()
    k = sys.n_params
    if rep.numerical_rank < k and not observable_only:
        raise SingularSystem(
            f"Hessian has rank {rep.numerical_rank} < {k}; "
            f"{k - rep.numerical_rank} unobservable direction(s)",
            rep.null_basis,
        )
    V = rep.observable_basis
    lam = rep.observable_eigenvalues
    if rep.numerical_rank == k:
        return np.linalg.solve(rep.hessian, b)
    return V @ ((V.T @ b) / lam)


@dataclass(frozen=True)
class CovarianceEstimate:
    """Covariance on the observable subspace.

    ``full()`` embeds it back into motion coordinates as
    ``V C V^T`` (the eigen-truncated pseudo-inverse form).
    """

    reduced_covariance: np.ndarray
    observable_basis: np.ndarray
    sigma_model: object = None

    def full(self) -> np.ndarray:
        V = self.observable_basis
        return V @ self.reduced_covariance @ V.T

    def in_basis(self, W) -> np.ndarray:
        """Covariance of the coordinates ``W^T x`` for orthonormal columns ``W``."""
        W = np.asarray(W, dtype=float)
        return W.T @ self.full() @ W

    def to_dict(self) -> dict:
        sm = self.sigma_model
        if isinstance(sm, NoiseModel):
            sm = {"kind": sm.kind, "sigma": sm.sigma, "seed": sm.seed}
        elif callable(sm):
            sm = "user-supplied"
        return {
            "reduced_covariance": self.reduced_covariance.tolist(),
            "observable_basis": self.observable_basis.T.tolist(),
            "full_covariance": self.full().tolist(),
            "sigma_model": sm,
        }


def _reduced_inverse(report: HessianReport) -> np.ndarray:
    V = report.observable_basis
    Ar = V.T @ report.hessian @ V
    Ar = 0.5 * (Ar + Ar.T)
    inv = np.linalg.inv(Ar)
    return 0.5 * (inv + inv.T)


def covariance_iid(report: HessianReport, sigma: float) -> CovarianceEstimate:
    """``sigma^2 A^-1`` restricted to the observable subspace."""
    if not sigma > 0:
        raise InvalidArgument("sigma must be > 0")
    return CovarianceEstimate(sigma**2 * _reduced_inverse(report), report.observable_basis, sigma)


NoiseCov = Union[np.ndarray, Callable[[int, int], np.ndarray]]


def _noise_matrix(sys: LsSystem, noise_cov: NoiseCov) -> np.ndarray:
    m, r, _ = sys.B.shape
    if callable(noise_cov):
        W = np.zeros((m * r, m * r))
        for i in range(m):
            for j in range(m):
                W[i * r : (i + 1) * r, j * r : (j + 1) * r] = np.asarray(noise_cov(i, j), dtype=float).reshape(r, r)
        return W
    W = np.asarray(noise_cov, dtype=float)
    if W.shape != (m * r, m * r):
        raise InvalidArgument(f"noise covariance must be {(m * r, m * r)}, got {W.shape}")
    return W


def covariance_general(
    sys: LsSystem, noise_cov: NoiseCov, report: HessianReport | None = None, tol: float = DEFAULT_RANK_TOL
) -> CovarianceEstimate:
    """Sandwich ``A^-1 (sum_ij B_i^T E[w_i w_j^T] B_j) A^-1`` on the observable subspace.

    ``noise_cov`` is either a callable ``(i, j) -> r x r`` block or the
    full ``(m r) x (m r)`` row-noise covariance.
    """
    if report is None:
        report = hessian(sys, tol)
    V = report.observable_basis
    Ainv = _reduced_inverse(report)
    flat_B, _ = sys.stacked()
    BV = flat_B @ V
    middle = BV.T @ _noise_matrix(sys, noise_cov) @ BV
    C = Ainv @ middle @ Ainv
    return CovarianceEstimate(0.5 * (C + C.T), V, noise_cov)
