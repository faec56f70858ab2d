"""Monte Carlo dispersion of ICP estimates versus closed-form covariances.

Per-trial randomness comes from ``numpy.random.SeedSequence(seed).spawn(trials)``:
trial ``i`` always draws from child ``i`` regardless of how trials are
scheduled, so results do not depend on the worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .covariance import CovarianceEstimate, build_system, covariance_iid, hessian, solve_ls
from .errors import BasisMismatch, DegenerateConfiguration, InsufficientData, InvalidArgument, SingularSystem, TooManyFailures
from .geometry import RigidTransform, exp_motion, log_motion, motion_size
from .icp import IcpConfig, run_icp
from .matching import nearest_neighbor_match
from .scenes import NoiseModel, PointCloud, SceneSpec, add_noise

ESTIMATORS = ("p2plane-step", "icp-p2p", "icp-p2plane")
MAX_FAILURE_FRACTION = 0.01


@dataclass(frozen=True)
class TrialConfig:
    """One Monte Carlo experiment.

    The target is the scene itself; the source is the scene moved by the
    inverse of ``true_motion`` so a perfect estimator returns
    ``true_motion``. ``phase_jitter`` (wall scenes only) re-samples the
    source along the wall at a random offset of up to
    ``±phase_jitter/2`` spacings per trial, modelling a rescan whose beams
    hit different wall points.
    """

    scene: SceneSpec
    noise: NoiseModel
    trials: int = 1000
    estimator: str = "p2plane-step"
    true_motion: tuple | None = None
    noise_on_target: bool = False
    phase_jitter: float = 0.0
    icp: IcpConfig = field(default_factory=IcpConfig)
    indices: tuple | None = None

    def __post_init__(self):
        if self.trials < 2:
            raise InvalidArgument("trials must be >= 2")
        if self.estimator not in ESTIMATORS:
            raise InvalidArgument(f"estimator must be one of {ESTIMATORS}")
        if self.phase_jitter and self.scene.kind != "wall2d":
            raise InvalidArgument("phase_jitter applies to wall2d scenes only")

    def motion(self, dim: int) -> np.ndarray:
        k = motion_size(dim)
        return np.zeros(k) if self.true_motion is None else np.asarray(self.true_motion, dtype=float)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["icp"] = asdict(self.icp)
        return d


@dataclass
class TrialOutcome:
    estimates: np.ndarray  # successful trials only, motion coordinates
    errors: np.ndarray  # estimate - true motion
    failures: int
    rematch_rate: float
    trials: int

    def projected(self, basis) -> np.ndarray:
        return self.errors @ np.asarray(basis, dtype=float)


def _trial(cfg: TrialConfig, target: PointCloud, seq: np.random.SeedSequence):
    rng = np.random.default_rng(seq)
    x_true = cfg.motion(target.dim)
    X_true = exp_motion(x_true)
    clean = target
    if cfg.phase_jitter:
        spacing = cfg.scene.params.get("spacing", 1.0)
        clean = cfg.scene.build(offset=cfg.phase_jitter * spacing * (rng.random() - 0.5))
    source = add_noise(clean.with_points(X_true.inverse().apply(clean.points)), cfg.noise, rng)
    tgt = add_noise(target, cfg.noise, rng) if cfg.noise_on_target else target
    try:
        if cfg.estimator == "p2plane-step":
            c = nearest_neighbor_match(source, tgt, RigidTransform.identity(target.dim), cfg.indices)
            est = solve_ls(build_system("p2plane", source, c, tgt))
            err = est - x_true
        else:
            variant = cfg.estimator.split("-", 1)[1]
            icp_cfg = IcpConfig(variant, cfg.icp.max_iterations, cfg.icp.transform_tolerance, cfg.icp.rejection_distance)
            res = run_icp(source, tgt, icp_cfg, indices=cfg.indices)
            c = res.final_matching
            est = log_motion(res.estimate)
            err = log_motion(res.estimate @ X_true.inverse())
    except (SingularSystem, DegenerateConfiguration):
        return None
    remat = float(np.mean(c.target_idx != c.source_idx)) if len(source) == len(target) else float("nan")
    return est, err, remat


def run_trials(cfg: TrialConfig, workers: int = 1) -> TrialOutcome:
    """Run ``cfg.trials`` noisy experiments; deterministic for a given ``cfg.noise.seed``."""
    target = cfg.scene.build()
    seqs = np.random.SeedSequence(cfg.noise.seed).spawn(cfg.trials)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(lambda s: _trial(cfg, target, s), seqs))
    else:
        results = [_trial(cfg, target, s) for s in seqs]
    ok = [r for r in results if r is not None]
    failures = cfg.trials - len(ok)
    if failures > MAX_FAILURE_FRACTION * cfg.trials:
        raise TooManyFailures(f"{failures}/{cfg.trials} trials failed")
    k = motion_size(target.dim)
    est = np.array([r[0] for r in ok]).reshape(-1, k)
    err = np.array([r[1] for r in ok]).reshape(-1, k)
    rates = [r[2] for r in ok]
    return TrialOutcome(est, err, failures, float(np.mean(rates)) if rates else float("nan"), cfg.trials)


def closed_form(cfg: TrialConfig, variant: str | None = None, tol: float = 1e-9):
    """``sigma^2 A^-1`` at the noise-free correspondence, with its Hessian report.

    The variant defaults to the estimator's. With noise on both clouds the
    row noise variance doubles, so ``sigma`` is scaled by ``sqrt(2)``.
    """
    target = cfg.scene.build()
    if variant is None:
        variant = "p2plane" if cfg.estimator == "p2plane-step" else cfg.estimator.split("-", 1)[1]
    c = nearest_neighbor_match(target, target, RigidTransform.identity(target.dim), cfg.indices)
    rep = hessian(build_system(variant, target, c, target), tol)
    sigma = cfg.noise.sigma * (math.sqrt(2.0) if cfg.noise_on_target else 1.0)
    return covariance_iid(rep, sigma), rep


def empirical_covariance(estimates, basis=None) -> np.ndarray:
    """Unbiased sample covariance of (optionally projected) estimates."""
    E = np.asarray(estimates, dtype=float)
    if E.ndim != 2 or E.shape[0] < 2:
        raise InsufficientData("need at least 2 estimates")
    if basis is not None:
        E = E @ np.asarray(basis, dtype=float)
    return np.atleast_2d(np.cov(E, rowvar=False, ddof=1))


@dataclass(frozen=True)
class CovComparison:
    empirical: np.ndarray
    closed_form: np.ndarray
    frobenius_rel_error: float
    eigenvalue_ratios: np.ndarray  # empirical / closed-form variance per closed-form eigendirection

    def to_dict(self) -> dict:
        return {
            "empirical": self.empirical.tolist(),
            "closed_form": self.closed_form.tolist(),
            "frobenius_rel_error": self.frobenius_rel_error,
            "eigenvalue_ratios": self.eigenvalue_ratios.tolist(),
        }


def compare_cov(empirical, closed: CovarianceEstimate, basis=None) -> CovComparison:
    """Compare an empirical covariance with a closed-form one.

    ``empirical`` is expressed in the coordinates of ``basis`` (default: the
    closed form's observable basis); both must span the same subspace.
    """
    E = np.atleast_2d(np.asarray(empirical, dtype=float))
    V = closed.observable_basis
    C = closed.reduced_covariance
    if basis is not None:
        W = np.asarray(basis, dtype=float)
        if W.shape != V.shape:
            raise BasisMismatch(f"basis shape {W.shape} != observable basis {V.shape}")
        M = V.T @ W
        if not np.allclose(np.linalg.svd(M, compute_uv=False), 1.0, atol=1e-8):
            raise BasisMismatch("bases span different subspaces")
        E = M @ E @ M.T
    if E.shape != C.shape:
        raise BasisMismatch(f"empirical {E.shape} vs closed-form {C.shape}")
    err = float(np.linalg.norm(E - C) / np.linalg.norm(C))
    w, U = np.linalg.eigh(C)
    order = np.argsort(w)[::-1]
    w, U = w[order], U[:, order]
    ratios = np.einsum("ik,ij,jk->k", U, E, U) / w
    return CovComparison(E, C, err, ratios)
