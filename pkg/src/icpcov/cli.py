"""Command-line entry point.

Every command writes its result to ``--out`` and prints one summary line.

Exit codes:
    0  completed, all requested checks passed
    1  completed, a bound or consistency check failed
    2  usage error (bad or missing flags)
    3  input or numerical error (unreadable file, missing normals, singular system, ...)
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import repro
from .covariance import VARIANTS, build_system, covariance_iid, hessian
from .errors import IcpCovError
from .geometry import RigidTransform, exp_motion, motion_size
from .icp import IcpConfig, run_icp
from .landscape import landscape_to_csv, remainder_decay, sample_landscape, verify_taylor_bound
from .matching import nearest_neighbor_match
from .montecarlo import ESTIMATORS, TrialConfig, closed_form, compare_cov, empirical_covariance, run_trials
from .reports import write_report
from .scenes import SCENES, NoiseModel, SceneSpec, add_noise, load_cloud, make_scene, save_cloud, sphere_geodesic_gap

THREADS_ENV = "ICPCOV_THREADS"

EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE, EXIT_INPUT = 0, 1, 2, 3

log = logging.getLogger("icpcov")


def _arguments(args) -> dict:
    return {k: v for k, v in vars(args).items() if k != "func"}


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(",", " ").split()]


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    return max(1, int(os.environ.get(THREADS_ENV, "1")))


# --- scene --------------------------------------------------------------------

_SCENE_FLAGS = {
    "wall2d": {"n": ("n", int), "spacing": ("spacing", float), "offset": ("offset", float)},
    "arc2d": {"radius": ("radius", float), "n": ("n", int), "span": ("arc_span", float)},
    "planewall3d": {"nh": ("n_h", int), "nv": ("n_v", int), "h": ("width_h", float), "v": ("width_v", float), "d": ("depth", float)},
    "corner3d": {"ppf": ("points_per_face", int), "extent": ("extent", float)},
    "spherepatch3d": {"radius": ("radius", float), "n": ("n", int), "half_angle": ("half_angle", float)},
}


def _scene_params(args) -> dict:
    flags = _SCENE_FLAGS[args.kind]
    return {param: getattr(args, flag) for flag, (param, _) in flags.items() if getattr(args, flag, None) is not None}


def cmd_scene(args) -> int:
    cloud = make_scene(args.kind, **_scene_params(args))
    if args.sigma:
        cloud = add_noise(cloud, NoiseModel(args.sigma, args.seed))
    save_cloud(cloud, args.out)
    print(f"scene {args.kind}: {len(cloud)} points ({cloud.dim}D) -> {args.out}")
    return EXIT_OK


# --- icp / cov ----------------------------------------------------------------


def _initial(args, dim: int) -> RigidTransform | None:
    if not getattr(args, "initial", None):
        return None
    x = np.array(_floats(args.initial))
    if x.size != motion_size(dim):
        raise IcpCovError(f"--initial needs {motion_size(dim)} numbers for {dim}D clouds")
    return exp_motion(x)


def cmd_icp(args) -> int:
    src, tgt = load_cloud(args.source), load_cloud(args.target)
    cfg = IcpConfig(args.variant, args.max_iterations, args.tolerance, args.reject)
    res = run_icp(src, tgt, cfg, _initial(args, src.dim), workers=_threads(args))
    write_report(args.out, "icp", _arguments(args), {"result": res.to_dict()})
    print(f"icp {args.variant}: {res.iterations} iterations, converged={res.converged}, final cost {res.cost_trace[-1]:.6g} -> {args.out}")
    return EXIT_OK


def cmd_cov(args) -> int:
    src, tgt = load_cloud(args.source), load_cloud(args.target)
    pose = _initial(args, src.dim) or RigidTransform.identity(src.dim)
    icp_info = None
    if args.run_icp:
        res = run_icp(src, tgt, IcpConfig(args.variant), pose, workers=_threads(args))
        pose, icp_info = res.estimate, res.to_dict()
    c = nearest_neighbor_match(src, tgt, pose, workers=_threads(args))
    rep = hessian(build_system(args.variant, src, c, tgt), args.rank_tol)
    cov = covariance_iid(rep, args.sigma) if rep.numerical_rank > 0 else None
    payload = {"hessian_report": rep.to_dict(), "covariance": cov.to_dict() if cov else None, "icp": icp_info}
    write_report(args.out, "covariance", _arguments(args), payload)
    print(f"cov {args.variant}: rank {rep.numerical_rank}/{rep.hessian.shape[0]}, unobservable {rep.hessian.shape[0] - rep.numerical_rank} -> {args.out}")
    return EXIT_OK


# --- landscape / taylor -------------------------------------------------------


def _grid(args, dim: int) -> np.ndarray:
    k = motion_size(dim)
    if args.grid_file:
        if not Path(args.grid_file).read_text().strip():
            raise IcpCovError("empty landscape grid")
        return np.loadtxt(args.grid_file, delimiter=",", ndmin=2)
    if args.start is None or args.stop is None or args.step is None:
        raise IcpCovError("give --grid-file or --axis/--start/--stop/--step")
    if not args.step > 0 or args.stop < args.start:
        raise IcpCovError("empty landscape grid")
    n = int(math.floor((args.stop - args.start) / args.step + 1e-9)) + 1
    ts = args.start + args.step * np.arange(n)
    g = np.zeros((n, k))
    g[:, args.axis] = ts
    return g


def cmd_landscape(args) -> int:
    src = load_cloud(args.source)
    tgt = load_cloud(args.target) if args.target else src
    grid = _grid(args, src.dim)
    mask = np.arange(args.margin, len(src) - args.margin) if args.margin else None
    samples = sample_landscape(src, tgt, grid, args.variant, indices=mask)
    landscape_to_csv(samples, args.out)
    gap = max(abs(s.true_cost - s.fixed_cost) for s in samples)
    print(f"landscape {args.variant}: {len(samples)} samples, max |true - fixed| = {gap:.6g} -> {args.out}")
    return EXIT_OK


def cmd_taylor(args) -> int:
    scene = load_cloud(args.scene)
    gap_fn = sphere_geodesic_gap(args.sphere_radius) if args.sphere_radius else None
    rng = np.random.default_rng(args.seed)
    motions = [np.array(_floats(m)) for m in args.motion] + repro.scaled_motions(scene, rng, args.random, args.max_disp, 0.0)
    if not motions:
        raise IcpCovError("no displacements: give --motion or --random")
    rows, ok = [], True
    for x in motions:
        rep = verify_taylor_bound(scene, x, gap_fn)
        ok &= rep.ok and rep.condition_failures == 0
        rows.append(
            {
                "motion": x.tolist(),
                "max_psi_over_bound": rep.max_ratio,
                "max_abs_psi": float(np.max(np.abs(rep.psi))),
                "rematched": int(np.sum(rep.rematched)),
                "bound_violations": rep.bound_violations,
                "lemma_violations": rep.lemma_violations,
                "no_rematch_violations": rep.no_rematch_violations,
                "condition_failures": rep.condition_failures,
            }
        )
        if args.csv_dir:
            Path(args.csv_dir).mkdir(parents=True, exist_ok=True)
            rep.to_csv(Path(args.csv_dir) / f"bound_{len(rows) - 1:03d}.csv")
    decay = None
    if args.decay_eps:
        direction = _floats(args.decay_direction) if args.decay_direction else np.ones(motion_size(scene.dim))
        decay = remainder_decay(scene, scene, direction, args.decay_eps).to_dict()
        if args.min_decay_ratio is not None:
            ok &= bool(min(decay["ratios"]) >= args.min_decay_ratio)
    write_report(args.out, "taylor", _arguments(args), {"displacements": rows, "decay": decay, "passed": ok})
    worst = max(r["max_psi_over_bound"] for r in rows)
    print(f"taylor: {len(rows)} displacements, max |psi|/bound = {worst:.4g}, passed={ok} -> {args.out}")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


# --- montecarlo / repro -------------------------------------------------------


def cmd_montecarlo(args) -> int:
    params = json.loads(args.params) if args.params else {}
    cfg = TrialConfig(
        SceneSpec(args.scene, params),
        NoiseModel(args.sigma, args.seed),
        trials=args.trials,
        estimator=args.estimator,
        true_motion=tuple(_floats(args.true_motion)) if args.true_motion else None,
        noise_on_target=args.noise_on_target,
        phase_jitter=args.phase_jitter,
    )
    out = run_trials(cfg, _threads(args))
    cf, rep = closed_form(cfg, args.closed_form_variant)
    cmp = compare_cov(empirical_covariance(out.errors, cf.observable_basis), cf)
    ok = args.max_frobenius is None or cmp.frobenius_rel_error <= args.max_frobenius
    payload = {
        "config": cfg.to_dict(),
        "failures": out.failures,
        "rematch_rate": out.rematch_rate,
        "mean_error": out.errors.mean(axis=0).tolist(),
        "empirical_full": empirical_covariance(out.errors).tolist(),
        "closed_form": cf.to_dict(),
        "closed_form_rank": rep.numerical_rank,
        "comparison": cmp.to_dict(),
        "passed": ok,
    }
    if args.include_estimates:
        payload["estimates"] = out.estimates.tolist()
    write_report(args.out, "montecarlo", _arguments(args), payload)
    print(f"montecarlo {args.estimator}: {len(out.errors)} trials, frobenius rel error {cmp.frobenius_rel_error:.4g} -> {args.out}")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_repro(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    checks = repro.run_all(_threads(args))
    for chk in checks:
        print(chk.line())
    ok = all(c.passed for c in checks)
    write_report(out_dir / "manifest.json", "repro", _arguments(args), {"checks": [c.to_dict() for c in checks], "passed": ok})
    print(f"repro: {sum(c.passed for c in checks)}/{len(checks)} checks passed -> {out_dir / 'manifest.json'}")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


# --- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=None, help=f"worker cap (default ${THREADS_ENV} or 1)")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="icpcov", description="ICP scan matching with closed-form covariance checks.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("scene", parents=[common], help="generate a synthetic cloud")
    s.add_argument("kind", choices=sorted(SCENES))
    s.add_argument("--out", required=True, help=".json or .csv")
    seen = set()
    for flags in _SCENE_FLAGS.values():
        for flag, (_, typ) in flags.items():
            if flag not in seen:
                s.add_argument(f"--{flag.replace('_', '-')}", dest=flag, type=typ)
                seen.add(flag)
    s.add_argument("--sigma", type=float, default=0.0, help="isotropic noise std")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_scene)

    s = sub.add_parser("icp", parents=[common], help="register two clouds")
    s.add_argument("--source", required=True)
    s.add_argument("--target", required=True)
    s.add_argument("--variant", choices=VARIANTS, default="p2plane")
    s.add_argument("--max-iterations", type=int, default=100)
    s.add_argument("--tolerance", type=float, default=1e-10)
    s.add_argument("--reject", type=float, default=None, help="max pair distance")
    s.add_argument("--initial", help="initial motion vector, rotation first")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_icp)

    s = sub.add_parser("cov", parents=[common], help="Hessian and covariance at a matching")
    s.add_argument("--source", required=True)
    s.add_argument("--target", required=True)
    s.add_argument("--variant", choices=VARIANTS, default="p2plane")
    s.add_argument("--sigma", type=float, default=1.0)
    s.add_argument("--rank-tol", type=float, default=1e-9)
    s.add_argument("--initial", help="pose of the matching (motion vector); default identity")
    s.add_argument("--run-icp", action="store_true", help="match at the converged ICP estimate")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_cov)

    s = sub.add_parser("landscape", parents=[common], help="true vs fixed-matching cost over a grid")
    s.add_argument("--source", required=True)
    s.add_argument("--target", help="default: the source itself")
    s.add_argument("--variant", choices=VARIANTS, default="p2p")
    s.add_argument("--grid-file", help="CSV of motion vectors, one per row")
    s.add_argument("--axis", type=int, default=1, help="motion component swept (default: first translation in 2D)")
    s.add_argument("--start", type=float)
    s.add_argument("--stop", type=float)
    s.add_argument("--step", type=float)
    s.add_argument("--margin", type=int, default=0, help="drop this many points at each end of the source")
    s.add_argument("--out", required=True, help="CSV")
    s.set_defaults(func=cmd_landscape)

    s = sub.add_parser("taylor", parents=[common], help="check the rematching discrepancy bound")
    s.add_argument("--scene", required=True, help="cloud with normals, curvature bound and abscissae")
    s.add_argument("--motion", action="append", default=[], help="displacement vector (repeatable)")
    s.add_argument("--random", type=int, default=0, help="number of random displacements")
    s.add_argument("--max-disp", type=float, default=0.3)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--sphere-radius", type=float, help="measure gaps as great-circle arcs (3D sphere scenes)")
    s.add_argument("--decay-eps", type=float, help="run the {4,2,1} x eps remainder-decay table")
    s.add_argument("--decay-direction")
    s.add_argument("--min-decay-ratio", type=float, default=None)
    s.add_argument("--csv-dir", help="write per-point CSV for each displacement")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_taylor)

    s = sub.add_parser("montecarlo", parents=[common], help="empirical vs closed-form covariance")
    s.add_argument("--scene", choices=sorted(SCENES), required=True)
    s.add_argument("--params", help='scene parameters as JSON, e.g. \'{"points_per_face": 25}\'')
    s.add_argument("--estimator", choices=ESTIMATORS, default="p2plane-step")
    s.add_argument("--closed-form-variant", choices=VARIANTS, default=None)
    s.add_argument("--sigma", type=float, required=True)
    s.add_argument("--trials", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--true-motion")
    s.add_argument("--noise-on-target", action="store_true")
    s.add_argument("--phase-jitter", type=float, default=0.0)
    s.add_argument("--max-frobenius", type=float, default=None, help="fail if the relative error exceeds this")
    s.add_argument("--include-estimates", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_montecarlo)

    s = sub.add_parser("repro", parents=[common], help="run the full reproduction suite")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_repro)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (IcpCovError, OSError, ValueError, KeyError, TypeError) as exc:
        print(f"icpcov {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
