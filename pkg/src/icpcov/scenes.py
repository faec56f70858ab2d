"""Synthetic scenes with analytic normals, abscissae and curvature bounds.

Every generator is deterministic. Noise is injected separately by
:func:`add_noise`, driven by a seeded PCG64 stream.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import DimensionMismatch, InvalidArgument

UNIT_TOL = 1e-12


@dataclass(frozen=True)
class PointCloud:
    """Ordered 2D or 3D points with optional unit normals and abscissae.

    ``abscissa_period`` is set for closed curves (full circles) so that
    abscissa gaps can be measured the short way round.
    """

    points: np.ndarray
    normals: np.ndarray | None = None
    abscissae: np.ndarray | None = None
    curvature_bound: float | None = None
    abscissa_period: float | None = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] == 0 or pts.shape[1] not in (2, 3):
            raise InvalidArgument(f"points must be a nonempty (n, 2|3) array, got shape {pts.shape}")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)
        if self.normals is not None:
            nrm = np.array(self.normals, dtype=float)
            if nrm.shape != pts.shape:
                raise InvalidArgument(f"normals shape {nrm.shape} != points shape {pts.shape}")
            if np.any(np.abs(np.linalg.norm(nrm, axis=1) - 1.0) > UNIT_TOL):
                raise InvalidArgument("normals must have unit norm")
            nrm.flags.writeable = False
            object.__setattr__(self, "normals", nrm)
        if self.abscissae is not None:
            s = np.array(self.abscissae, dtype=float).reshape(-1)
            if s.size != pts.shape[0]:
                raise InvalidArgument("one abscissa per point required")
            if np.any(np.diff(s) <= 0):
                raise InvalidArgument("abscissae must be strictly increasing")
            s.flags.writeable = False
            object.__setattr__(self, "abscissae", s)
        if self.curvature_bound is not None and self.curvature_bound < 0:
            raise InvalidArgument("curvature_bound must be >= 0")

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    def with_points(self, points) -> "PointCloud":
        return replace(self, points=points)

    def abscissa_gap(self, i, j) -> np.ndarray:
        """``|s_i - s_j|``, wrapped for closed curves."""
        if self.abscissae is None:
            raise InvalidArgument("cloud has no abscissae")
        gap = np.abs(self.abscissae[i] - self.abscissae[j])
        if self.abscissa_period is not None:
            gap = np.minimum(gap, self.abscissa_period - gap)
        return gap


@dataclass(frozen=True)
class NoiseModel:
    sigma: float
    seed: int = 0
    kind: str = "isotropic-gaussian"

    def __post_init__(self):
        if not self.sigma >= 0:
            raise InvalidArgument(f"sigma must be >= 0, got {self.sigma}")
        if self.kind != "isotropic-gaussian":
            raise InvalidArgument(f"unsupported noise kind {self.kind!r}")


def _symmetric_grid(n: int, width: float) -> np.ndarray:
    # integer numerators keep the grid exactly symmetric about zero
    k = np.arange(n, dtype=float)
    return (2.0 * k - (n - 1)) * (width / (2.0 * (n - 1)))


def gen_wall_2d(n: int = 10, spacing: float = 1.0, offset: float = 0.0) -> PointCloud:
    """``n`` collinear points ``(offset + k*spacing, 0)`` facing +y."""
    if n < 2 or not spacing > 0:
        raise InvalidArgument("gen_wall_2d needs n >= 2 and spacing > 0")
    s = np.arange(n) * spacing
    pts = np.column_stack([offset + s, np.zeros(n)])
    normals = np.tile([0.0, 1.0], (n, 1))
    return PointCloud(pts, normals, s, 0.0)


def gen_arc_2d(radius: float = 1.0, n: int = 629, arc_span: float = 2 * math.pi) -> PointCloud:
    """Points on a circular arc centred at the origin, normals inward.

    A span of a full turn yields a closed circle of ``n`` distinct points
    (no duplicated endpoint); otherwise both arc ends are included.
    """
    if not radius > 0 or n < 2 or not 0 < arc_span <= 2 * math.pi + 1e-12:
        raise InvalidArgument("gen_arc_2d needs radius > 0, n >= 2, 0 < arc_span <= 2*pi")
    closed = abs(arc_span - 2 * math.pi) <= 1e-12
    step = arc_span / n if closed else arc_span / (n - 1)
    phi = np.arange(n) * step
    u = np.column_stack([np.cos(phi), np.sin(phi)])
    return PointCloud(
        radius * u,
        -u,
        radius * phi,
        1.0 / radius,
        2 * math.pi * radius if closed else None,
    )


def gen_plane_wall_3d(
    n_h: int = 9, n_v: int = 9, width_h: float = 2.0, width_v: float = 2.0, depth: float = 1.0
) -> PointCloud:
    """Symmetric ``n_h x n_v`` grid on the plane ``z = depth``, normals ``(0, 0, -1)``."""
    if n_h < 2 or n_v < 2 or not (width_h > 0 and width_v > 0 and depth > 0):
        raise InvalidArgument("gen_plane_wall_3d needs n_h, n_v >= 2 and positive sizes")
    xs = _symmetric_grid(n_h, width_h)
    ys = _symmetric_grid(n_v, width_v)
    X, Y = np.meshgrid(xs, ys)
    pts = np.column_stack([X.ravel(), Y.ravel(), np.full(X.size, float(depth))])
    normals = np.tile([0.0, 0.0, -1.0], (X.size, 1))
    return PointCloud(pts, normals, None, 0.0)


def gen_corner_3d(points_per_face: int = 25, extent: float = 1.0) -> PointCloud:
    """Inside corner of a box: grids on the planes x, y, z = extent.

    ``points_per_face`` must be a perfect square; grid cells are sampled at
    their centres so no point sits on a shared edge.
    """
    m = math.isqrt(points_per_face)
    if points_per_face < 4 or m * m != points_per_face or not extent > 0:
        raise InvalidArgument("gen_corner_3d needs a square points_per_face >= 4 and extent > 0")
    u = (np.arange(m) + 0.5) * (extent / m)
    U, V = np.meshgrid(u, u)
    U, V = U.ravel(), V.ravel()
    E = np.full(U.size, float(extent))
    faces = [
        (np.column_stack([E, U, V]), [-1.0, 0.0, 0.0]),
        (np.column_stack([U, E, V]), [0.0, -1.0, 0.0]),
        (np.column_stack([U, V, E]), [0.0, 0.0, -1.0]),
    ]
    pts = np.vstack([f for f, _ in faces])
    normals = np.vstack([np.tile(nv, (U.size, 1)) for _, nv in faces])
    return PointCloud(pts, normals, None, 0.0)


def gen_sphere_patch_3d(radius: float = 1.0, n: int = 41, half_angle: float = 0.5) -> PointCloud:
    """Patch of a sphere centred at the origin around +z, normals inward.

    Both principal curvatures equal ``1/radius``.
    """
    if not radius > 0 or n < 2 or not 0 < half_angle < math.pi / 2:
        raise InvalidArgument("gen_sphere_patch_3d needs radius > 0, n >= 2, 0 < half_angle < pi/2")
    a = _symmetric_grid(n, 2 * half_angle)
    U, V = np.meshgrid(a, a)
    U, V = U.ravel(), V.ravel()
    d = np.column_stack([np.cos(V) * np.sin(U), np.sin(V), np.cos(V) * np.cos(U)])
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return PointCloud(radius * d, -d, None, 1.0 / radius)


def sphere_geodesic_gap(radius: float, center=(0.0, 0.0, 0.0)) -> Callable:
    """Arc length between points of a sphere along the great circle through them.

    For a sphere, the plane spanned by the normal at ``a_i`` and the chord
    ``a_j - a_i`` contains the centre, so its section is that great circle.
    """
    c = np.asarray(center, dtype=float)

    def gap(a_i, a_j):
        u, v = np.asarray(a_i) - c, np.asarray(a_j) - c
        cross = np.linalg.norm(np.cross(u, v), axis=-1)
        return radius * np.arctan2(cross, np.sum(u * v, axis=-1))

    return gap


def add_noise(cloud: PointCloud, noise: NoiseModel, rng: np.random.Generator | None = None) -> PointCloud:
    """Perturb every point by isotropic N(0, sigma^2 I); metadata is copied.

    Uses ``numpy.random.default_rng(noise.seed)`` unless a generator is given.
    """
    if noise.sigma == 0:
        return cloud
    if rng is None:
        rng = np.random.default_rng(noise.seed)
    return cloud.with_points(cloud.points + rng.normal(0.0, noise.sigma, size=cloud.points.shape))


SCENES: dict[str, Callable[..., PointCloud]] = {
    "wall2d": gen_wall_2d,
    "arc2d": gen_arc_2d,
    "planewall3d": gen_plane_wall_3d,
    "corner3d": gen_corner_3d,
    "spherepatch3d": gen_sphere_patch_3d,
}


@dataclass(frozen=True)
class SceneSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def build(self, **overrides) -> PointCloud:
        return make_scene(self.kind, **{**self.params, **overrides})


def make_scene(kind: str, **params) -> PointCloud:
    try:
        gen = SCENES[kind]
    except KeyError:
        raise InvalidArgument(f"unknown scene kind {kind!r}; choose from {sorted(SCENES)}") from None
    return gen(**params)


# --- serialization ----------------------------------------------------------
# JSON floats use Python's shortest round-trip repr, which is lossless.


def cloud_to_dict(cloud: PointCloud) -> dict:
    return {
        "dim": cloud.dim,
        "points": cloud.points.tolist(),
        "normals": None if cloud.normals is None else cloud.normals.tolist(),
        "abscissae": None if cloud.abscissae is None else cloud.abscissae.tolist(),
        "curvature_bound": cloud.curvature_bound,
        "abscissa_period": cloud.abscissa_period,
    }


def cloud_from_dict(doc: dict) -> PointCloud:
    cloud = PointCloud(
        np.asarray(doc["points"], dtype=float),
        doc.get("normals"),
        doc.get("abscissae"),
        doc.get("curvature_bound"),
        doc.get("abscissa_period"),
    )
    if "dim" in doc and doc["dim"] != cloud.dim:
        raise DimensionMismatch(f"declared dim {doc['dim']} but points are {cloud.dim}D")
    return cloud


def _csv_header(cloud: PointCloud) -> list[str]:
    axes = "xyz"[: cloud.dim]
    cols = list(axes)
    if cloud.normals is not None:
        cols += ["n" + a for a in axes]
    if cloud.abscissae is not None:
        cols.append("s")
    return cols


def save_cloud(cloud: PointCloud, path) -> None:
    """Write ``.json`` (full metadata) or ``.csv`` (one point per row)."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        cols = [cloud.points]
        if cloud.normals is not None:
            cols.append(cloud.normals)
        if cloud.abscissae is not None:
            cols.append(cloud.abscissae[:, None])
        table = np.hstack(cols)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(_csv_header(cloud))
            w.writerows([repr(float(v)) for v in row] for row in table)
    else:
        path.write_text(json.dumps(cloud_to_dict(cloud)))


def load_cloud(path) -> PointCloud:
    path = Path(path)
    if path.suffix.lower() != ".csv":
        return cloud_from_dict(json.loads(path.read_text()))
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    col = {name: k for k, name in enumerate(header)}
    dim = 3 if "z" in col else 2
    axes = "xyz"[:dim]
    pts = body[:, [col[a] for a in axes]]
    normals = body[:, [col["n" + a] for a in axes]] if "n" + axes[0] in col else None
    s = body[:, col["s"]] if "s" in col else None
    return PointCloud(pts, normals, s)
