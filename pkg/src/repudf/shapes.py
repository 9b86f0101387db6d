"""Closed-form unsigned distance fields used as ground truth.

Every shape is defined through its closest-point map: ``udf(p) = |p - cp(p)|``
and, away from the surface and the medial axis, ``grad udf(p) = (p - cp) / udf``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidArgumentError, UndefinedGradientError
from .geometry import ColoredPointCloud, NormalizationTransform
from .rng import make_rng

GRAD_TOL = 1e-7

_COLOR_FREQ = np.array([[1.7, 0.9, -1.3], [-0.8, 2.1, 1.1], [1.2, -1.5, 1.9]])
_COLOR_PHASE = np.array([0.3, 1.9, 4.1])


def smooth_position_color(points: np.ndarray) -> np.ndarray:
    """Deterministic smooth RGB in [0, 1] derived from position."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    return 0.5 + 0.5 * np.sin(pts @ _COLOR_FREQ.T + _COLOR_PHASE)


def _norm(v: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(v * v, axis=-1))


class AnalyticShape:
    kind = "shape"
    color_fn: Callable[[np.ndarray], np.ndarray] = staticmethod(smooth_position_color)

    # -- subclass hooks ------------------------------------------------------
    def closest(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Closest surface points and a mask of points on/near the medial axis."""
        raise NotImplementedError

    def _sample(self, rng: np.random.Generator, count: int) -> tuple[np.ndarray, np.ndarray]:
        """``count`` area-uniform surface points with outward normals."""
        raise NotImplementedError

    def params(self) -> list[float]:
        raise NotImplementedError

    # -- shared API ----------------------------------------------------------
    @property
    def spec(self) -> str:
        return f"{self.kind}:" + ",".join(f"{v:g}" for v in self.params())

    def udf(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        cp, _ = self.closest(pts)
        return _norm(pts - cp)

    def grad(self, points, tol: float = GRAD_TOL) -> tuple[np.ndarray, np.ndarray]:
        """Unit gradients and a validity mask (False on the surface or medial axis)."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        cp, medial = self.closest(pts)
        diff = pts - cp
        dist = _norm(diff)
        valid = (dist > tol) & ~medial
        g = np.zeros_like(pts)
        g[valid] = diff[valid] / dist[valid, None]
        return g, valid

    def colors_at(self, points) -> np.ndarray:
        """Surface color of the closest surface point."""
        cp, _ = self.closest(np.asarray(points, dtype=np.float64).reshape(-1, 3))
        return self.color_fn(cp)

    def sample_surface(self, count: int, rng_seed: int = 0) -> ColoredPointCloud:
        if count <= 0:
            raise InvalidArgumentError("count must be positive")
        pts, _ = self._sample(make_rng(rng_seed, f"surface:{self.kind}"), count)
        return ColoredPointCloud(pts, self.color_fn(pts))

    def sample_with_normals(self, count: int, rng_seed: int = 0):
        return self._sample(make_rng(rng_seed, f"surface:{self.kind}"), count)


def eval_udf(shape: AnalyticShape, p) -> float:
    return float(shape.udf(np.asarray(p, dtype=np.float64).reshape(1, 3))[0])


def eval_grad(shape: AnalyticShape, p, tol: float = GRAD_TOL) -> np.ndarray:
    g, valid = shape.grad(np.asarray(p, dtype=np.float64).reshape(1, 3), tol)
    if not valid[0]:
        raise UndefinedGradientError(f"gradient undefined at {np.asarray(p).tolist()}")
    return g[0]


def sample_surface(shape: AnalyticShape, count: int, rng_seed: int = 0) -> ColoredPointCloud:
    return shape.sample_surface(count, rng_seed)


def make_partial_view(shape: AnalyticShape, view_dir, count: int, rng_seed: int = 0,
                      noise: float = 0.0) -> ColoredPointCloud:
    """Surface samples whose outward normal faces ``view_dir`` (n . v >= 0).

    ``count`` surface points are drawn first and the back-facing ones culled,
    so roughly half survive for a closed convex shape. Colors are taken before
    the optional Gaussian perturbation of positions.
    """
    v = np.asarray(view_dir, dtype=np.float64).reshape(3)
    nv = np.linalg.norm(v)
    if not nv > 0:
        raise InvalidArgumentError("view direction must be nonzero")
    v = v / nv
    pts, normals = shape.sample_with_normals(count, rng_seed)
    keep = normals @ v >= 0.0
    pts = pts[keep]
    colors = shape.color_fn(pts)
    if noise > 0:
        pts = pts + make_rng(rng_seed, "view-noise").normal(0.0, noise, size=pts.shape)
    return ColoredPointCloud(pts, colors)


@dataclass(frozen=True)
class Sphere(AnalyticShape):
    radius: float = 1.0
    kind = "sphere"

    def __post_init__(self):
        if not self.radius > 0:
            raise InvalidArgumentError("sphere radius must be positive")

    def params(self):
        return [self.radius]

    def closest(self, points):
        n = _norm(points)
        medial = n < GRAD_TOL
        safe = np.where(medial, 1.0, n)
        dirs = points / safe[:, None]
        dirs[medial] = (1.0, 0.0, 0.0)
        return self.radius * dirs, medial

    def udf(self, points):
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return np.abs(_norm(pts) - self.radius)

    def _sample(self, rng, count):
        d = rng.normal(size=(count, 3))
        d /= _norm(d)[:, None]
        return self.radius * d, d.copy()


@dataclass(frozen=True)
class Box(AnalyticShape):
    half_extents: tuple[float, float, float] = (1.0, 1.0, 1.0)
    kind = "box"

    def __post_init__(self):
        h = tuple(float(x) for x in self.half_extents)
        if len(h) != 3 or min(h) <= 0:
            raise InvalidArgumentError("box needs three positive half-extents")
        object.__setattr__(self, "half_extents", h)

    def params(self):
        return list(self.half_extents)

    def closest(self, points):
        h = np.asarray(self.half_extents)
        q = np.abs(points) - h
        inside = np.all(q <= 0, axis=1)
        cp = np.clip(points, -h, h)
        medial = np.zeros(len(points), dtype=bool)
        if inside.any():
            qi = q[inside]
            axis = np.argmax(qi, axis=1)
            srt = np.sort(qi, axis=1)
            medial[inside] = srt[:, -1] - srt[:, -2] < GRAD_TOL
            pi = points[inside].copy()
            rows = np.arange(len(pi))
            sgn = np.where(pi[rows, axis] >= 0, 1.0, -1.0)
            medial[np.flatnonzero(inside)[np.abs(pi[rows, axis]) < GRAD_TOL]] = True
            pi[rows, axis] = sgn * h[axis]
            cp[inside] = pi
        return cp, medial

    def face_areas(self) -> np.ndarray:
        hx, hy, hz = self.half_extents
        a = np.array([hy * hz, hx * hz, hx * hy]) * 4.0
        return np.repeat(a, 2)  # faces -x, +x, -y, +y, -z, +z

    def _sample(self, rng, count):
        h = np.asarray(self.half_extents)
        areas = self.face_areas()
        face = rng.choice(6, size=count, p=areas / areas.sum())
        u = rng.uniform(-1.0, 1.0, size=(count, 3)) * h
        axis = face // 2
        sign = np.where(face % 2 == 0, -1.0, 1.0)
        rows = np.arange(count)
        u[rows, axis] = sign * h[axis]
        normals = np.zeros((count, 3))
        normals[rows, axis] = sign
        return u, normals


@dataclass(frozen=True)
class Torus(AnalyticShape):
    """Torus around the z axis with major radius ``R`` and tube radius ``r``."""

    major: float = 1.0
    minor: float = 0.25
    kind = "torus"

    def __post_init__(self):
        if not (self.major > 0 and self.minor > 0):
            raise InvalidArgumentError("torus radii must be positive")
        if self.minor >= self.major:
            raise InvalidArgumentError("torus needs minor < major")

    def params(self):
        return [self.major, self.minor]

    def _core(self, points):
        rho = np.hypot(points[:, 0], points[:, 1])
        on_axis = rho < GRAD_TOL
        safe = np.where(on_axis, 1.0, rho)
        c = np.zeros_like(points)
        c[:, 0] = self.major * points[:, 0] / safe
        c[:, 1] = self.major * points[:, 1] / safe
        c[on_axis, 0] = self.major
        return c, on_axis

    def closest(self, points):
        c, on_axis = self._core(points)
        off = points - c
        dn = _norm(off)
        on_core = dn < GRAD_TOL
        safe = np.where(on_core, 1.0, dn)
        dirs = off / safe[:, None]
        dirs[on_core] = (0.0, 0.0, 1.0)
        return c + self.minor * dirs, on_axis | on_core

    def udf(self, points):
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        rho = np.hypot(pts[:, 0], pts[:, 1])
        return np.abs(np.hypot(rho - self.major, pts[:, 2]) - self.minor)

    def _sample(self, rng, count):
        R, r = self.major, self.minor
        out_u = np.empty(0)
        out_v = np.empty(0)
        while len(out_u) < count:
            m = 2 * (count - len(out_u)) + 16
            u = rng.uniform(0, 2 * np.pi, m)
            v = rng.uniform(0, 2 * np.pi, m)
            w = rng.uniform(0, 1, m)
            keep = w <= (R + r * np.cos(v)) / (R + r)
            out_u = np.concatenate([out_u, u[keep]])
            out_v = np.concatenate([out_v, v[keep]])
        u, v = out_u[:count], out_v[:count]
        normals = np.stack([np.cos(v) * np.cos(u), np.cos(v) * np.sin(u), np.sin(v)], axis=1)
        centers = np.stack([R * np.cos(u), R * np.sin(u), np.zeros(count)], axis=1)
        return centers + r * normals, normals


@dataclass(frozen=True)
class LProfile(AnalyticShape):
    """Outline of an L-shaped region in the z = 0 plane, bounding box centred at the origin.

    The region is ``[0, a] x [0, w]`` united with ``[0, w] x [0, b]`` before
    centring; the outline is a closed polyline of six segments with five convex
    corners and one reflex corner.
    """

    leg_a: float = 2.4
    leg_b: float = 2.4
    width: float = 0.8
    kind = "lprofile"

    def __post_init__(self):
        if min(self.leg_a, self.leg_b, self.width) <= 0:
            raise InvalidArgumentError("L-profile dimensions must be positive")
        if self.width >= min(self.leg_a, self.leg_b):
            raise InvalidArgumentError("L-profile width must be shorter than both legs")

    def params(self):
        return [self.leg_a, self.leg_b, self.width]

    @property
    def vertices(self) -> np.ndarray:
        a, b, w = self.leg_a, self.leg_b, self.width
        v = np.array([[0, 0], [a, 0], [a, w], [w, w], [w, b], [0, b]], dtype=np.float64)
        return v - np.array([a / 2, b / 2])

    @property
    def convex_corners(self) -> np.ndarray:
        return self.vertices[[0, 1, 2, 4, 5]]

    @property
    def segments(self) -> tuple[np.ndarray, np.ndarray]:
        v = self.vertices
        return v, np.roll(v, -1, axis=0)

    @property
    def perimeter(self) -> float:
        a, b = self.segments
        return float(np.sum(_norm(b - a)))

    def closest(self, points):
        a, b = self.segments
        xy = points[:, None, :2]
        ab = b - a
        t = np.clip(np.sum((xy - a) * ab, axis=-1) / np.sum(ab * ab, axis=-1), 0.0, 1.0)
        cps = a + t[..., None] * ab  # (n, 6, 2)
        d2 = np.sum((xy - cps) ** 2, axis=-1)
        best = np.argmin(d2, axis=1)
        rows = np.arange(len(points))
        cp2 = cps[rows, best]
        dmin = np.sqrt(d2[rows, best])
        # Medial: another segment is equally close but touches a different point.
        near = np.sqrt(d2) - dmin[:, None] < GRAD_TOL
        spread = np.max(np.where(near, _norm(cps - cp2[:, None, :]), 0.0), axis=1)
        medial = spread > GRAD_TOL
        cp = np.zeros_like(points)
        cp[:, :2] = cp2
        return cp, medial

    def _sample(self, rng, count):
        a, b = self.segments
        lengths = _norm(b - a)
        seg = rng.choice(len(a), size=count, p=lengths / lengths.sum())
        t = rng.uniform(0, 1, count)
        xy = a[seg] + t[:, None] * (b[seg] - a[seg])
        d = b[seg] - a[seg]
        # Counter-clockwise outline: outward normal is the tangent rotated by -90 degrees.
        nrm = np.stack([d[:, 1], -d[:, 0]], axis=1) / lengths[seg, None]
        pts = np.zeros((count, 3))
        pts[:, :2] = xy
        normals = np.zeros((count, 3))
        normals[:, :2] = nrm
        return pts, normals


class NormalizedShape(AnalyticShape):
    """A shape seen through ``normalized = (p - centroid) / scale``.

    Distances shrink by ``scale``; colors stay those of the original surface,
    and surface sampling reuses the base shape's random stream.
    """

    def __init__(self, base: AnalyticShape, transform: NormalizationTransform):
        self.base = base
        self.transform = transform
        self.kind = base.kind

    def params(self):
        return self.base.params()

    def color_fn(self, points):
        return self.base.color_fn(self.transform.invert(points))

    def closest(self, points):
        cp, medial = self.base.closest(self.transform.invert(points))
        return self.transform.apply(cp), medial

    def _sample(self, rng, count):
        pts, normals = self.base._sample(rng, count)
        return self.transform.apply(pts), normals


SHAPES = {"sphere": Sphere, "box": Box, "torus": Torus, "lprofile": LProfile}


def parse_shape(spec: str) -> AnalyticShape:
    """Parse ``name[:p1,p2,...]``, e.g. ``torus:1,0.25`` or ``box:1,0.5,0.5``."""
    name, _, rest = spec.strip().partition(":")
    name = name.lower()
    if name not in SHAPES:
        raise InvalidArgumentError(f"unknown shape {name!r}; choose from {sorted(SHAPES)}")
    try:
        vals = [float(x) for x in rest.split(",")] if rest else []
    except ValueError as exc:
        raise InvalidArgumentError(f"bad shape parameters in {spec!r}") from exc
    if name == "box":
        return Box(tuple(vals)) if vals else Box()
    return SHAPES[name](*vals)
