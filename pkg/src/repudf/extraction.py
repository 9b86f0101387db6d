"""Surface extraction by UDF point shifting interleaved with k-NN repulsion.

Each iteration moves every surviving query once along the normalised UDF
gradient, ``q <- q - f(q) grad f / |grad f|``, and then (when enabled) once
away from its k nearest neighbours by ``sum_i (q - q_i) / |q - q_i|^2``,
clamped per component.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Protocol

import numpy as np

from .decoder import NeighborhoodDecoder, SceneContext, decode_colors
from .errors import InvalidArgumentError
from .geometry import ColoredPointCloud, sample_query_points
from .shapes import AnalyticShape
from .spatial import SpatialIndex

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExtractionConfig:
    queries: int = 216_000
    query_range: float = 3.0
    planar: bool = False
    iterations: int = 10
    threshold: float = 0.23
    k: int = 16
    clamp: float = 0.03
    batch_size: int = 48_000
    repulsion: bool = True
    repulsion_scale: float = 1.0
    fd_step: float = 1e-3
    grad_eps: float = 1e-12

    def __post_init__(self):
        if self.iterations < 1:
            raise InvalidArgumentError("iterations must be >= 1")
        if not self.threshold > 0:
            raise InvalidArgumentError("threshold must be positive")
        if self.k < 1:
            raise InvalidArgumentError("k must be >= 1")
        if not self.clamp > 0:
            raise InvalidArgumentError("clamp must be positive")
        if self.batch_size < 1 or self.queries < 1:
            raise InvalidArgumentError("batch size and query count must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "ExtractionConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidArgumentError(f"unknown extraction config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExtractionConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)


class Field(Protocol):
    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Unsigned distance values (>= 0)."""

    def colors(self, points: np.ndarray) -> np.ndarray | None:
        """RGB in [0, 1] or None for uncoloured fields."""

    def gradient(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Gradients (not necessarily unit) and a validity mask."""


class AnalyticField:
    """Exact field; on the medial axis the gradient falls back to central differences."""

    def __init__(self, shape: AnalyticShape, fd_step: float = 1e-5):
        self.shape = shape
        self.fd_step = fd_step

    def evaluate(self, points):
        return self.shape.udf(points)

    def colors(self, points):
        return self.shape.colors_at(points)

    def gradient(self, points):
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        g, valid = self.shape.grad(pts)
        redo = np.flatnonzero(~valid)
        if redo.size:
            h = self.fd_step
            sub = pts[redo]
            gf = np.stack([(self.shape.udf(sub + h * e) - self.shape.udf(sub - h * e)) / (2 * h)
                           for e in np.eye(3)], axis=1)
            g[redo] = gf
            valid = valid.copy()
            valid[redo] = np.all(np.isfinite(gf), axis=1)
        return g, valid


class LearnedField:
    """Decoder wrapped as a field; gradients by central differences."""

    def __init__(self, model: NeighborhoodDecoder, context: SceneContext, m: int | None = None,
                 n: int | None = None, fd_step: float = 1e-3, batch: int = 8192):
        self.model = model
        self.ctx = context
        self.m = model.cfg.k_coarse if m is None else m
        self.n = model.cfg.k_fine if n is None else n
        self.fd_step = fd_step
        self.batch = batch

    @classmethod
    def from_cloud(cls, model: NeighborhoodDecoder, cloud: ColoredPointCloud, fine_stride=None, **kw):
        return cls(model, model.context(cloud, fine_stride), **kw)

    def _decode(self, points, want_colors: bool):
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        udf = np.empty(len(pts))
        rgb = np.empty((len(pts), 3)) if want_colors else None
        for s in range(0, len(pts), self.batch):
            f, logits = self.model.query(pts[s:s + self.batch], self.ctx, self.m, self.n)
            udf[s:s + self.batch] = f.data
            if want_colors:
                rgb[s:s + self.batch] = decode_colors(logits)
        return udf, rgb

    def raw(self, points) -> np.ndarray:
        return self._decode(points, False)[0]

    def evaluate(self, points):
        return np.maximum(self.raw(points), 0.0)

    def colors(self, points):
        return self._decode(points, True)[1]

    def gradient(self, points):
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        h = self.fd_step
        stacked = np.concatenate([pts + h * e for e in np.eye(3)] + [pts - h * e for e in np.eye(3)])
        vals = self.evaluate(stacked).reshape(6, len(pts))
        g = (vals[:3] - vals[3:]).T / (2 * h)
        return g, np.all(np.isfinite(g), axis=1)


def init_queries(cfg: ExtractionConfig, rng_seed: int) -> np.ndarray:
    return sample_query_points(cfg.queries, cfg.query_range, rng_seed, planar=cfg.planar)


def udf_shift_step(points, field: Field, eps: float = 1e-12, values: np.ndarray | None = None) -> np.ndarray:
    """One step ``q - f(q) grad/|grad|``; points with undefined or tiny gradients stay put."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    f = field.evaluate(pts) if values is None else values
    g, valid = field.gradient(pts)
    gn = np.sqrt(np.sum(g * g, axis=1))
    move = valid & (gn >= eps) & (f > 0)
    out = pts.copy()
    out[move] = pts[move] - f[move, None] * g[move] / gn[move, None]
    return out


def _coincident_push(i: np.ndarray, j: np.ndarray) -> np.ndarray:
    """Deterministic unit vectors separating coincident pairs; antisymmetric in (i, j)."""
    lo, hi = np.minimum(i, j).astype(np.uint64), np.maximum(i, j).astype(np.uint64)
    with np.errstate(over="ignore"):
        h = lo * np.uint64(0x9E3779B97F4A7C15) ^ hi * np.uint64(0xC2B2AE3D27D4EB4F)
        a = ((h >> np.uint64(11)) & np.uint64(0xFFFFF)).astype(np.float64) / 0x100000
        b = ((h >> np.uint64(33)) & np.uint64(0xFFFFF)).astype(np.float64) / 0x100000
    theta = 2 * np.pi * a
    z = 2 * b - 1
    r = np.sqrt(np.maximum(0.0, 1 - z * z))
    v = np.stack([r * np.cos(theta), r * np.sin(theta), z], axis=-1)
    sign = np.where(i < j, 1.0, -1.0)
    return v * sign[..., None]


def repulsion_forces(points, k: int = 16, batch_size: int = 48_000, planar: bool = False,
                     index: SpatialIndex | None = None) -> np.ndarray:
    """Raw ``sum (q - q_i) / |q - q_i|^2`` over each point's k nearest other points."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = len(pts)
    if n < k + 1:
        raise InvalidArgumentError(f"repulsion with k={k} needs at least {k + 1} points, got {n}")
    index = index or SpatialIndex(pts)
    forces = np.zeros_like(pts)
    for s in range(0, n, batch_size):
        ids = np.arange(s, min(n, s + batch_size))
        nbr, _ = index.knn(pts[ids], k + 1)
        # Drop the point itself (or, among duplicates listed first, the last candidate).
        is_self = nbr == ids[:, None]
        drop = np.where(is_self.any(axis=1), np.argmax(is_self, axis=1), k)
        keep = np.ones_like(nbr, dtype=bool)
        keep[np.arange(len(ids)), drop] = False
        nbr = np.sort(nbr[keep].reshape(len(ids), k), axis=1)  # fixed summation order
        diff = pts[ids, None, :] - pts[nbr]
        d2 = np.sum(diff * diff, axis=-1)
        coincident = d2 < 1e-24
        safe = np.where(coincident, 1.0, d2)
        terms = diff / safe[..., None]
        if coincident.any():
            r, c = np.nonzero(coincident)
            push = _coincident_push(ids[r], nbr[r, c])
            if planar:
                push[:, 2] = 0.0
            terms[r, c] = push
        acc = np.zeros((len(ids), 3))
        for j in range(k):
            acc += terms[:, j]
        forces[ids] = acc
    return forces


def repulsion_step(points, k: int = 16, clamp: float = 0.03, scale: float = 1.0,
                   batch_size: int = 48_000, planar: bool = False) -> np.ndarray:
    """Move each point by its clamped repulsion force, all computed from one snapshot."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    disp = np.clip(scale * repulsion_forces(pts, k, batch_size, planar), -clamp, clamp)
    return pts + disp


@dataclass
class ExtractionResult:
    cloud: ColoredPointCloud
    initial: np.ndarray            # all initial queries
    survivors_initial: np.ndarray  # initial positions of the points kept by the threshold
    config: ExtractionConfig
    history: list[np.ndarray] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return len(self.cloud) == 0

    def summary(self) -> dict:
        return {
            "initial_queries": int(len(self.initial)),
            "survivors": int(len(self.cloud)),
            "iterations": self.config.iterations,
            "repulsion": "on" if self.config.repulsion else "off",
            "threshold": self.config.threshold,
            "empty_result": self.empty,
        }


def _batched_eval(field: Field, pts: np.ndarray, batch: int) -> np.ndarray:
    return np.concatenate([field.evaluate(pts[s:s + batch]) for s in range(0, len(pts), batch)]) \
        if len(pts) else np.zeros(0)


def extract_surface(field: Field, cfg: ExtractionConfig | None = None, rng_seed: int = 0,
                    keep_history: bool = False) -> ExtractionResult:
    cfg = cfg or ExtractionConfig()
    q0 = init_queries(cfg, rng_seed)
    f0 = _batched_eval(field, q0, cfg.batch_size)
    keep = f0 < cfg.threshold
    pts = q0[keep]
    history = [pts.copy()] if keep_history else []
    if len(pts) == 0:
        log.warning("no query below threshold %.3g; empty result", cfg.threshold)
        empty = ColoredPointCloud(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0))
        return ExtractionResult(empty, q0, pts, cfg, history)
    k = min(cfg.k, len(pts) - 1)
    for _ in range(cfg.iterations):
        pts = np.concatenate([
            udf_shift_step(pts[s:s + cfg.batch_size], field, cfg.grad_eps)
            for s in range(0, len(pts), cfg.batch_size)])
        if cfg.repulsion and k >= 1:
            pts = repulsion_step(pts, k, cfg.clamp, cfg.repulsion_scale, cfg.batch_size, cfg.planar)
        if keep_history:
            history.append(pts.copy())
    f = _batched_eval(field, pts, cfg.batch_size)
    rgb = field.colors(pts)
    if rgb is None:
        rgb = np.full((len(pts), 3), 0.5)
    cloud = ColoredPointCloud(pts, np.clip(rgb, 0.0, 1.0), f)
    return ExtractionResult(cloud, q0, q0[keep], cfg, history)
