"""Point-cloud value types, normalization, query sampling and augmentation."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidInputError
from .rng import make_rng

Point3 = np.ndarray  # shape (3,), float64


def _as_points(a, name="positions") -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 1 and arr.size == 3:
        arr = arr.reshape(1, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise InvalidInputError(f"{name} must have shape (n, 3), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contain non-finite values")
    return arr


@dataclass(frozen=True, eq=False)
class ColoredPointCloud:
    """Positions with optional per-point RGB in [0, 1] and optional UDF values."""

    positions: np.ndarray
    colors: np.ndarray | None = None
    udf: np.ndarray | None = None

    def __post_init__(self):
        pos = _as_points(self.positions)
        object.__setattr__(self, "positions", pos)
        if self.colors is not None:
            col = np.asarray(self.colors, dtype=np.float64).reshape(-1, 3)
            if len(col) != len(pos):
                raise InvalidInputError(
                    f"colors length {len(col)} != positions length {len(pos)}")
            if np.any(col < 0.0) or np.any(col > 1.0) or not np.all(np.isfinite(col)):
                raise InvalidInputError("colors must lie in [0, 1]")
            object.__setattr__(self, "colors", col)
        if self.udf is not None:
            u = np.asarray(self.udf, dtype=np.float64).reshape(-1)
            if len(u) != len(pos):
                raise InvalidInputError("udf length does not match positions")
            if np.any(u < 0.0):
                raise InvalidInputError("udf values must be >= 0")
            object.__setattr__(self, "udf", u)

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def has_colors(self) -> bool:
        return self.colors is not None

    def subset(self, idx) -> "ColoredPointCloud":
        idx = np.asarray(idx)
        return ColoredPointCloud(
            self.positions[idx],
            None if self.colors is None else self.colors[idx],
            None if self.udf is None else self.udf[idx],
        )

    def with_positions(self, positions) -> "ColoredPointCloud":
        return replace(self, positions=positions)


@dataclass(frozen=True)
class NormalizationTransform:
    """``normalized = (p - centroid) / scale``."""

    centroid: np.ndarray
    scale: float

    def __post_init__(self):
        if not (self.scale > 0 and np.isfinite(self.scale)):
            raise InvalidInputError(f"scale must be positive, got {self.scale}")
        object.__setattr__(self, "centroid", np.asarray(self.centroid, dtype=np.float64).reshape(3))

    def apply(self, points) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.centroid) / self.scale

    def invert(self, points) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) * self.scale + self.centroid


def normalize_to_unit(cloud: ColoredPointCloud) -> tuple[ColoredPointCloud, NormalizationTransform]:
    """Center at the origin and scale isotropically to mean squared radius 3.

    Mean squared distance 3 corresponds to unit variance per axis on average;
    the single scale keeps the aspect ratio of the object.
    """
    if len(cloud) == 0:
        raise InvalidInputError("cannot normalize an empty cloud")
    pos = cloud.positions
    centroid = pos.mean(axis=0)
    msd = np.mean(np.sum((pos - centroid) ** 2, axis=1))
    if not msd > 1e-24:
        raise InvalidInputError("degenerate scale: all points coincide")
    tf = NormalizationTransform(centroid, float(np.sqrt(msd / 3.0)))
    out = ColoredPointCloud(tf.apply(pos), cloud.colors, None if cloud.udf is None else cloud.udf / tf.scale)
    return out, tf


def denormalize(cloud: ColoredPointCloud, tf: NormalizationTransform) -> ColoredPointCloud:
    return ColoredPointCloud(tf.invert(cloud.positions), cloud.colors,
                             None if cloud.udf is None else cloud.udf * tf.scale)


def sample_query_points(count: int, range_: float = 3.0, rng_seed: int = 0,
                        planar: bool = False) -> np.ndarray:
    """``count`` points uniform in ``[-range_, range_]^3`` (z = 0 when ``planar``)."""
    if count <= 0:
        raise InvalidInputError(f"count must be positive, got {count}")
    if not range_ > 0:
        raise InvalidInputError(f"range must be positive, got {range_}")
    rng = make_rng(rng_seed, "queries")
    pts = rng.uniform(-range_, range_, size=(count, 3))
    if planar:
        pts[:, 2] = 0.0
    return pts


def rotation_xyz(ax: float, ay: float, az: float) -> np.ndarray:
    """Rotation about X, then Y, then Z (angles in radians): ``R = Rz @ Ry @ Rx``."""
    cx, sx = np.cos(ax), np.sin(ax)
    cy, sy = np.cos(ay), np.sin(ay)
    cz, sz = np.cos(az), np.sin(az)
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return rz @ ry @ rx


@dataclass(frozen=True)
class Similarity:
    scale: float
    rotation: np.ndarray = field(repr=False)

    def apply(self, points) -> np.ndarray:
        return self.scale * (np.asarray(points, dtype=np.float64) @ self.rotation.T)


def draw_augmentation(rng_seed: int, scale_range=(0.8, 1.2),
                      max_angle: float = np.pi) -> Similarity:
    rng = make_rng(rng_seed, "augmentation")
    s = rng.uniform(*scale_range)
    angles = rng.uniform(-max_angle, max_angle, size=3)
    return Similarity(float(s), rotation_xyz(*angles))


def apply_augmentation(cloud: ColoredPointCloud, rng_seed: int,
                       transform: Similarity | None = None, **kwargs) -> ColoredPointCloud:
    """Random similarity: scale in [0.8, 1.2], rotations in [-180, 180] deg about X, Y, Z.

    Pass ``transform`` to reuse one draw across several clouds (e.g. a partial
    view and its ground truth).
    """
    if len(cloud) == 0:
        raise InvalidInputError("cannot augment an empty cloud")
    tf = transform if transform is not None else draw_augmentation(rng_seed, **kwargs)
    udf = None if cloud.udf is None else cloud.udf * tf.scale
    return ColoredPointCloud(tf.apply(cloud.positions), cloud.colors, udf)
