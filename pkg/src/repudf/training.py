"""Losses, supervision targets and the per-shape fitting loop."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .autodiff import tensor as T
from .autodiff.optim import AdamState, adam_step
from .autodiff.tensor import Tape, Tensor
from .decoder import COLOR_BINS, ModelConfig, NeighborhoodDecoder
from .errors import InvalidArgumentError, NonFiniteError
from .geometry import (ColoredPointCloud, NormalizationTransform, apply_augmentation, draw_augmentation,
                       normalize_to_unit)
from .rng import derive_seed, make_rng
from .shapes import AnalyticShape, NormalizedShape, make_partial_view, parse_shape
from .spatial import SpatialIndex, fps_sample

log = logging.getLogger(__name__)

RGB_RADIUS = 0.1
UDF_CLAMP = 0.5
W_RGB = 0.01
W_ANCHOR = 0.03


@dataclass
class TrainTargets:
    udf: np.ndarray          # (Nq,) distance to nearest GT point
    rgb: np.ndarray          # (Nq, 3) colour of nearest GT point in [0, 1]
    valid: np.ndarray        # (Nq,) nearest GT strictly within RGB_RADIUS
    gt_fps: np.ndarray       # (M, 3) sparse GT for the anchor loss

    @property
    def rgb_class(self) -> np.ndarray:
        return np.rint(self.rgb * (COLOR_BINS - 1)).astype(np.int64)


@dataclass(frozen=True)
class LossReport:
    anchor: float
    udf: float
    rgb: float
    total: float

    @staticmethod
    def combine(udf: float, rgb: float, anchor: float) -> float:
        return udf + W_RGB * rgb + W_ANCHOR * anchor


# ---------------------------------------------------------------------------
# losses


def anchor_loss(locations, gt_fps) -> Tensor:
    """Two-sided L1 chamfer: mean over anchors of the nearest-GT L1 distance plus the reverse."""
    x = T.as_tensor(locations)
    g = np.asarray(gt_fps, dtype=np.float64).reshape(-1, 3)
    if x.shape[0] == 0 or len(g) == 0:
        raise InvalidArgumentError("anchor loss needs non-empty sets")
    m, k = x.shape[0], len(g)
    xe = T.expand(T.reshape(x, (m, 1, 3)), (m, k, 3))
    dist = T.sum(T.absolute(T.sub(xe, Tensor(np.broadcast_to(g[None], (m, k, 3)).copy()))), axis=-1)
    return T.add(T.mean(T.min(dist, axis=1)), T.mean(T.min(dist, axis=0)))


def udf_loss(pred, target, delta: float = UDF_CLAMP) -> Tensor:
    """Mean of ``|min(f, delta) - min(udf, delta)|``."""
    f = T.as_tensor(pred)
    t = np.minimum(np.asarray(target, dtype=np.float64).reshape(f.shape), delta)
    return T.mean(T.absolute(T.sub(T.clampmax(f, delta), Tensor(t))))


def rgb_loss(logits, targets: TrainTargets) -> Tensor:
    """Per-channel 256-way cross-entropy averaged over valid queries; exactly 0 without any."""
    lg = T.as_tensor(logits)
    valid = np.flatnonzero(targets.valid)
    if valid.size == 0:
        return Tensor(0.0)
    logp = T.log_softmax(T.gather(lg, valid) if valid.size < lg.shape[0] else lg, axis=-1)
    onehot = np.zeros(logp.shape)
    cls = targets.rgb_class[valid]
    np.put_along_axis(onehot, cls[..., None], 1.0, axis=-1)
    return T.scale(T.sum(T.mul(logp, Tensor(onehot))), -1.0 / (3 * valid.size))


def total_loss(udf: Tensor, rgb: Tensor, anchor: Tensor) -> Tensor:
    return T.add(T.add(udf, T.scale(rgb, W_RGB)), T.scale(anchor, W_ANCHOR))


# ---------------------------------------------------------------------------
# targets


def build_targets(queries, gt: ColoredPointCloud, num_anchors: int = 200,
                  gt_index: SpatialIndex | None = None, gt_fps: np.ndarray | None = None,
                  fps_start: int = 0) -> TrainTargets:
    if len(gt) == 0:
        raise InvalidArgumentError("ground truth cloud is empty")
    index = gt_index or SpatialIndex(gt.positions)
    ids, dist = index.nearest(np.asarray(queries, dtype=np.float64).reshape(-1, 3))
    colors = gt.colors if gt.colors is not None else np.zeros((len(gt), 3))
    if gt_fps is None:
        gt_fps = gt.positions[fps_sample(gt.positions, min(num_anchors, len(gt)), fps_start)]
    return TrainTargets(dist, colors[ids], dist < RGB_RADIUS, gt_fps)


# ---------------------------------------------------------------------------
# fitting


@dataclass
class TrainConfig:
    shape: str = "torus:1,0.25"
    steps: int = 5000
    lr: float = 1e-4
    warmup_frac: float = 0.05
    seed: int = 0
    queries: int = 550
    query_range: float = 3.0
    gt_points: int = 20000
    view_points: int = 2000
    view_dir: tuple[float, float, float] = (0.5, 0.3, 1.0)
    view_noise: float = 0.0
    augment: bool = False
    udf_clamp: float = UDF_CLAMP
    normalize: bool = True
    # Opt-in experiment, off by default: share of queries drawn around GT points.
    near_surface_frac: float = 0.0
    near_surface_sigma: float = 0.05
    model: ModelConfig = field(default_factory=ModelConfig)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        data = dict(data)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidArgumentError(f"unknown training config keys: {sorted(unknown)}")
        if "model" in data and isinstance(data["model"], dict):
            data["model"] = ModelConfig.from_dict(data["model"])
        if "view_dir" in data:
            data["view_dir"] = tuple(float(v) for v in data["view_dir"])
        cfg = cls(**data)
        if not 0.0 <= cfg.near_surface_frac <= 1.0:
            raise InvalidArgumentError("near_surface_frac must lie in [0, 1]")
        return cfg

    @classmethod
    def load(cls, path) -> "TrainConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["view_dir"] = list(self.view_dir)
        return out


@dataclass
class ShapeData:
    """Inputs and supervision for one shape, derived deterministically from the seed.

    Everything lives in the normalized frame; ``transform`` maps object units to it.
    """

    shape: AnalyticShape
    partial: ColoredPointCloud
    gt: ColoredPointCloud
    gt_index: SpatialIndex
    gt_fps: np.ndarray
    transform: NormalizationTransform


def prepare_shape_data(shape: AnalyticShape, cfg: TrainConfig, seed: int) -> ShapeData:
    gt_seed = derive_seed(seed, "gt-surface")
    if cfg.normalize:
        # Statistics come from the full GT sample rather than the partial view.
        _, tf = normalize_to_unit(shape.sample_surface(cfg.gt_points, gt_seed))
        shape = NormalizedShape(shape, tf)
    else:
        tf = NormalizationTransform(np.zeros(3), 1.0)
    partial = make_partial_view(shape, cfg.view_dir, cfg.view_points,
                                derive_seed(seed, "partial-view"), noise=cfg.view_noise)
    gt = shape.sample_surface(cfg.gt_points, gt_seed)
    fps = gt.positions[fps_sample(gt.positions, min(cfg.model.num_anchors, len(gt)), 0)]
    return ShapeData(shape, partial, gt, SpatialIndex(gt.positions), fps, tf)


def transform_meta(tf: NormalizationTransform) -> dict:
    return {"centroid": [float(v) for v in tf.centroid], "scale": float(tf.scale)}


def sample_training_queries(rng: np.random.Generator, cfg: TrainConfig, gt: ColoredPointCloud) -> np.ndarray:
    """Uniform queries in the cube; optionally a share jittered around GT points."""
    n_near = int(round(cfg.near_surface_frac * cfg.queries))
    q = rng.uniform(-cfg.query_range, cfg.query_range, size=(cfg.queries - n_near, 3))
    if n_near == 0:
        return q
    ids = rng.integers(0, len(gt), size=n_near)
    near = gt.positions[ids] + rng.normal(0.0, cfg.near_surface_sigma, size=(n_near, 3))
    return np.vstack([q, np.clip(near, -cfg.query_range, cfg.query_range)])


@dataclass
class FitResult:
    model: NeighborhoodDecoder
    history: list[LossReport]
    lrs: list[float]
    data: ShapeData
    config: TrainConfig

    def write_loss_csv(self, path) -> None:
        write_loss_csv(path, self.history, self.lrs)


def write_loss_csv(path, history: list[LossReport], lrs: list[float]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "anchor", "udf", "rgb", "total", "lr"])
        for i, (rep, lr) in enumerate(zip(history, lrs), start=1):
            w.writerow([i, repr(rep.anchor), repr(rep.udf), repr(rep.rgb), repr(rep.total), repr(lr)])


def training_step(model: NeighborhoodDecoder, data: ShapeData, queries: np.ndarray,
                  udf_clamp: float = UDF_CLAMP, partial: ColoredPointCloud | None = None,
                  gt: tuple | None = None) -> tuple[Tape, Tensor, LossReport]:
    """Forward pass for one batch; returns the tape, the total loss and its report.

    ``gt`` optionally overrides ``(cloud, index, fps)`` (used by augmentation).
    """
    gt_cloud, gt_index, gt_fps = gt or (data.gt, data.gt_index, data.gt_fps)
    targets = build_targets(queries, gt_cloud, gt_index=gt_index, gt_fps=gt_fps)
    with Tape() as tape:
        ctx = model.context(partial if partial is not None else data.partial)
        f, logits = model.query(queries, ctx)
        l_udf = udf_loss(f, targets.udf, udf_clamp)
        l_rgb = rgb_loss(logits, targets)
        l_anch = anchor_loss(ctx.anchors.locations, targets.gt_fps)
        total = total_loss(l_udf, l_rgb, l_anch)
    report = LossReport(float(l_anch.data), float(l_udf.data), float(l_rgb.data), float(total.data))
    return tape, total, report


def fit_shape(shape: AnalyticShape | str, cfg: TrainConfig | None = None, rng_seed: int | None = None,
              checkpoint_path=None, progress: Callable[[int, LossReport], None] | None = None,
              model: NeighborhoodDecoder | None = None) -> FitResult:
    """Fit a fresh decoder to one analytic shape with Adam + warmup/cosine schedule."""
    cfg = cfg or TrainConfig()
    if isinstance(shape, str):
        shape = parse_shape(shape)
    seed = cfg.seed if rng_seed is None else rng_seed
    cfg = replace(cfg, seed=seed)
    if cfg.model.query_range != cfg.query_range:
        cfg = replace(cfg, model=replace(cfg.model, query_range=cfg.query_range))
    data = prepare_shape_data(shape, cfg, seed)
    model = model or NeighborhoodDecoder(cfg.model, seed=derive_seed(seed, "model"))
    params = model.named_parameters()
    opt = AdamState(lr=cfg.lr, total_steps=cfg.steps, warmup_frac=cfg.warmup_frac)
    qrng = make_rng(seed, "train-queries")
    history: list[LossReport] = []
    lrs: list[float] = []
    last_good = model.state_dict()
    for step in range(1, cfg.steps + 1):
        queries = sample_training_queries(qrng, cfg, data.gt)
        partial, gt = None, None
        if cfg.augment:
            sim = draw_augmentation(derive_seed(seed, f"aug-{step}"))
            partial = apply_augmentation(data.partial, 0, transform=sim)
            g = apply_augmentation(data.gt, 0, transform=sim)
            gt = (g, SpatialIndex(g.positions), sim.apply(data.gt_fps))
        for p in params.values():
            p.grad = None
        tape, total, report = training_step(model, data, queries, cfg.udf_clamp, partial, gt)
        if not np.isfinite(report.total):
            _abort(model, last_good, checkpoint_path, step, report)
        tape.backward(total)
        try:
            last_good = model.state_dict()
            lr = adam_step(opt, params)
        except NonFiniteError:
            _abort(model, last_good, checkpoint_path, step, report)
        history.append(report)
        lrs.append(lr)
        if progress is not None:
            progress(step, report)
    if checkpoint_path is not None:
        model.save(checkpoint_path, {"train_config": cfg.to_dict(), "steps": cfg.steps,
                                     "normalization": transform_meta(data.transform)})
    return FitResult(model, history, lrs, data, cfg)


def _abort(model, state, checkpoint_path, step, report):
    model.load_state_dict(state)
    if checkpoint_path is not None:
        model.save(checkpoint_path, {"aborted_at_step": step})
    raise NonFiniteError(f"non-finite loss at step {step}: {report}")
