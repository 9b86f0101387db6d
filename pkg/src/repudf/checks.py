"""Gradient checks over the primitives and the full decoder pipeline.

Inputs are drawn away from kinks (|x| > 0.05 for relu/abs, distinct extrema
for max/min) so that central differences at ``h = 1e-6`` see a smooth function.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .autodiff import tensor as T
from .autodiff.gradcheck import grad_check
from .autodiff.tensor import Tensor
from .decoder import ModelConfig, NeighborhoodDecoder
from .geometry import ColoredPointCloud
from .rng import make_rng
from .training import anchor_loss, build_targets, rgb_loss, total_loss, udf_loss


@dataclass
class CheckResult:
    name: str
    seed: int
    error: float

    def passed(self, tol: float = 1e-4) -> bool:
        return bool(np.isfinite(self.error) and self.error < tol)


def _away_from_zero(rng, shape, margin=0.05):
    x = rng.uniform(margin, 1.0, size=shape)
    return x * rng.choice([-1.0, 1.0], size=shape)


def _distinct(rng, shape):
    """Values whose pairwise gaps exceed 1e-3, so max/min selection is stable."""
    n = int(np.prod(shape))
    vals = np.linspace(-1.0, 1.0, n) + rng.uniform(-1e-4, 1e-4, n)
    return rng.permutation(vals).reshape(shape)


def _scalarize(out: Tensor, w: np.ndarray) -> Tensor:
    return T.sum(T.mul(out, Tensor(w)))


def primitive_cases(rng) -> dict[str, tuple[Callable[[], Tensor], list[Tensor]]]:
    """One scalar-valued test function per primitive, with its leaf inputs."""
    def leaf(x):
        return Tensor(np.asarray(x, dtype=np.float64), requires_grad=True)

    a = leaf(rng.normal(size=(4, 5)))
    b = leaf(rng.normal(size=(4, 5)))
    row = leaf(rng.normal(size=5))
    pos = leaf(rng.uniform(0.5, 2.0, size=(4, 5)))
    kink = leaf(_away_from_zero(rng, (4, 5)))
    dist = leaf(_distinct(rng, (4, 5)))
    m1 = leaf(rng.normal(size=(3, 4, 5)))
    m2 = leaf(rng.normal(size=(5, 2)))
    m3 = leaf(rng.normal(size=(3, 5, 2)))
    col = leaf(rng.normal(size=(4, 1)))
    w = rng.normal(size=(4, 5))
    idx = rng.integers(0, 4, size=(3, 2))
    s = lambda out: _scalarize(out, rng_w(out.shape))  # noqa: E731
    cache: dict = {}

    def rng_w(shape):
        if shape not in cache:
            cache[shape] = np.random.default_rng(len(cache) + 17).normal(size=shape)
        return cache[shape]

    return {
        "add": (lambda: s(T.add(a, b)), [a, b]),
        "add_row": (lambda: s(T.add(a, row)), [a, row]),
        "sub": (lambda: s(T.sub(a, row)), [a, row]),
        "mul": (lambda: s(T.mul(a, b)), [a, b]),
        "div": (lambda: s(T.div(a, pos)), [a, pos]),
        "scale": (lambda: s(T.scale(a, -1.7)), [a]),
        "shift": (lambda: s(T.shift(a, 0.3)), [a]),
        "relu": (lambda: s(T.relu(kink)), [kink]),
        "tanh": (lambda: s(T.tanh(a)), [a]),
        "exp": (lambda: s(T.exp(a)), [a]),
        "log": (lambda: s(T.log(pos)), [pos]),
        "power": (lambda: s(T.power(pos, 1.5)), [pos]),
        "absolute": (lambda: s(T.absolute(kink)), [kink]),
        "clampmin": (lambda: s(T.clampmin(kink, 0.0)), [kink]),
        "clampmax": (lambda: s(T.clampmax(kink, 0.0)), [kink]),
        "matmul_shared": (lambda: s(T.matmul(m1, m2)), [m1, m2]),
        "matmul_batched": (lambda: s(T.matmul(m1, m3)), [m1, m3]),
        "sum": (lambda: T.sum(T.mul(T.sum(a, axis=0), row)), [a, row]),
        "mean": (lambda: s(T.mean(m1, axis=1)), [m1]),
        "max": (lambda: s(T.max(dist, axis=1)), [dist]),
        "min": (lambda: s(T.min(dist, axis=0)), [dist]),
        "softmax": (lambda: s(T.softmax(a, axis=1)), [a]),
        "log_softmax": (lambda: s(T.log_softmax(a, axis=-1)), [a]),
        "concat": (lambda: s(T.concat([a, b], axis=1)), [a, b]),
        "gather": (lambda: s(T.gather(a, idx)), [a]),
        "reshape": (lambda: s(T.reshape(m1, (12, 5))), [m1]),
        "transpose": (lambda: s(T.transpose(m1, (2, 0, 1))), [m1]),
        "index": (lambda: s(T.index(a, (slice(1, 3), slice(None)))), [a]),
        "expand": (lambda: s(T.expand(col, (4, 5))), [col]),
        "weighted": (lambda: T.sum(T.mul(a, Tensor(w))), [a]),
    }


def check_primitives(seed: int, h: float = 1e-6) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    return [CheckResult(name, seed, grad_check(fn, inputs, h=h, seed=seed))
            for name, (fn, inputs) in primitive_cases(rng).items()]


TINY_MODEL = ModelConfig(d=8, num_tokens=4, group_size=4, num_anchors=6, k_coarse=2, k_fine=2,
                         predictor_layers=1, predictor_heads=2, head_blocks=1, head_width=8,
                         freq_bands=2)


def pipeline_case(seed: int, cfg: ModelConfig = TINY_MODEL, n_points: int = 24, n_queries: int = 5):
    """Scalar total loss of encode -> anchors -> aggregate -> decode, and the model parameters."""
    rng = make_rng(seed, "gradcheck")
    model = NeighborhoodDecoder(cfg, seed=seed)
    pts = rng.normal(size=(n_points, 3))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    cloud = ColoredPointCloud(pts, rng.uniform(0, 1, size=(n_points, 3)))
    gt_pts = rng.normal(size=(40, 3))
    gt_pts /= np.linalg.norm(gt_pts, axis=1, keepdims=True)
    gt = ColoredPointCloud(gt_pts, rng.uniform(0, 1, size=(40, 3)))
    queries = gt_pts[:n_queries] + rng.normal(scale=0.03, size=(n_queries, 3))
    targets = build_targets(queries, gt, num_anchors=10)

    def fn():
        ctx = model.context(cloud)
        f, logits = model.query(queries, ctx)
        return total_loss(udf_loss(f, targets.udf), rgb_loss(logits, targets),
                          anchor_loss(ctx.anchors.locations, targets.gt_fps))

    return fn, list(model.named_parameters().values())


def check_pipeline(seed: int, h: float = 1e-6, entries: int = 3) -> CheckResult:
    fn, params = pipeline_case(seed)
    return CheckResult("pipeline", seed, grad_check(fn, params, h=h, entries=entries, seed=seed))


@dataclass
class EndToEndResult:
    f1_on: float
    f1_off: float
    survivors: int
    fit: object          # FitResult
    on: object           # ExtractionResult
    off: object

    def summary(self) -> dict:
        last = self.fit.history[-1]
        return {"f1_repulsion_on": self.f1_on, "f1_repulsion_off": self.f1_off,
                "survivors": self.survivors, "final_udf_loss": last.udf,
                "final_total_loss": last.total}


def end_to_end(train_cfg=None, queries: int = 50_000, seed: int = 0, progress=None) -> EndToEndResult:
    """Fit on the configured shape, extract with repulsion on and off, score F1 against the GT cloud.

    Everything is compared in the normalized training frame. An empty extraction scores 0.
    """
    from .extraction import ExtractionConfig, LearnedField, extract_surface
    from .metrics import f1_score
    from .training import TrainConfig, fit_shape

    cfg = train_cfg or TrainConfig()
    fit = fit_shape(cfg.shape, cfg, seed, progress=progress)
    field = LearnedField(fit.model, fit.model.context(fit.data.partial))
    runs = {}
    for mode in (True, False):
        runs[mode] = extract_surface(field, ExtractionConfig(queries=queries, repulsion=mode), seed)
    score = {m: 0.0 if r.empty else f1_score(r.cloud, fit.data.gt) for m, r in runs.items()}
    return EndToEndResult(score[True], score[False], len(runs[True].cloud), fit, runs[True], runs[False])
