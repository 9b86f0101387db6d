"""Point-cloud evaluation: L1 chamfer, F1 at a distance threshold, L1-RGB, spacing CV."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import InvalidInputError
from .geometry import ColoredPointCloud
from .spatial import SpatialIndex

F1_THRESHOLD = 0.1
RGB_RADIUS = 0.1


def _positions(c) -> np.ndarray:
    pts = c.positions if isinstance(c, ColoredPointCloud) else np.asarray(c, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        raise InvalidInputError("metric needs a non-empty point set")
    return pts


def chamfer_l1(pred, gt) -> float:
    """Sum of the two directional mean nearest-neighbour L1 distances."""
    p, g = _positions(pred), _positions(gt)
    _, d_pg = SpatialIndex(g, p=1).nearest(p)
    _, d_gp = SpatialIndex(p, p=1).nearest(g)
    return float(np.mean(d_pg) + np.mean(d_gp))


def precision_recall(pred, gt, threshold: float = F1_THRESHOLD) -> tuple[float, float]:
    p, g = _positions(pred), _positions(gt)
    _, d_pg = SpatialIndex(g).nearest(p)
    _, d_gp = SpatialIndex(p).nearest(g)
    return float(np.mean(d_pg < threshold)), float(np.mean(d_gp < threshold))


def f1_score(pred, gt, threshold: float = F1_THRESHOLD) -> float:
    """F1 in percent; a point matches when a counterpart lies strictly within ``threshold``."""
    prec, rec = precision_recall(pred, gt, threshold)
    if prec + rec == 0:
        return 0.0
    return 200.0 * prec * rec / (prec + rec)


@dataclass(frozen=True)
class RgbResult:
    value: float
    term_a: float
    term_b: float
    frac_a: float      # |P_A| / |pred|
    frac_b: float      # |P_B| / |gt|
    empty_a: bool
    empty_b: bool


def l1_rgb_terms(pred: ColoredPointCloud, gt: ColoredPointCloud, radius: float = RGB_RADIUS) -> RgbResult:
    if not (isinstance(pred, ColoredPointCloud) and isinstance(gt, ColoredPointCloud)):
        raise InvalidInputError("L1-RGB needs ColoredPointCloud inputs")
    if pred.colors is None or gt.colors is None:
        raise InvalidInputError("L1-RGB needs colors on both clouds")
    p, g = _positions(pred), _positions(gt)
    ia, da = SpatialIndex(g).nearest(p)
    ib, db = SpatialIndex(p).nearest(g)
    a = da < radius
    b = db < radius
    term_a = float(np.mean(np.abs(pred.colors[a] - gt.colors[ia[a]]).sum(axis=1))) if a.any() else 0.0
    term_b = float(np.mean(np.abs(gt.colors[b] - pred.colors[ib[b]]).sum(axis=1))) if b.any() else 0.0
    return RgbResult(0.5 * (term_a + term_b), term_a, term_b, float(a.mean()), float(b.mean()),
                     not a.any(), not b.any())


def l1_rgb(pred: ColoredPointCloud, gt: ColoredPointCloud, radius: float = RGB_RADIUS) -> float:
    """Mean of the two directional in-radius L1 colour errors."""
    return l1_rgb_terms(pred, gt, radius).value


def spacing_uniformity(pred) -> float:
    """Coefficient of variation of nearest-neighbour distances."""
    p = _positions(pred)
    if len(p) < 2:
        raise InvalidInputError("spacing uniformity needs at least two points")
    _, d = SpatialIndex(p).knn(p, 2)
    nn = d[:, 1]
    mu = nn.mean()
    if mu == 0.0:
        return float("inf")
    return float(nn.std() / mu)


def coverage(pred, gt, radius: float = 0.05) -> float:
    """Fraction of ``gt`` points with a ``pred`` point strictly within ``radius``."""
    p, g = _positions(pred), _positions(gt)
    _, d = SpatialIndex(p).nearest(g)
    return float(np.mean(d < radius))


@dataclass(frozen=True)
class EvalReport:
    l1_chamfer: float
    f1: float
    precision: float
    recall: float
    l1_rgb: float
    rgb_frac_pred: float
    rgb_frac_gt: float
    rgb_empty_pred: bool
    rgb_empty_gt: bool
    spacing_cv: float
    n_pred: int
    n_gt: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(asdict(self)), lineterminator="\n")
        w.writeheader()
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in asdict(self).items()})
        return buf.getvalue()


def evaluate(pred: ColoredPointCloud, gt: ColoredPointCloud, threshold: float = F1_THRESHOLD) -> EvalReport:
    prec, rec = precision_recall(pred, gt, threshold)
    f1 = 0.0 if prec + rec == 0 else 200.0 * prec * rec / (prec + rec)
    if pred.colors is not None and gt.colors is not None:
        rgb = l1_rgb_terms(pred, gt)
    else:
        rgb = RgbResult(0.0, 0.0, 0.0, 0.0, 0.0, True, True)
    cv = spacing_uniformity(pred) if len(pred) >= 2 else 0.0
    return EvalReport(chamfer_l1(pred, gt), f1, prec, rec, rgb.value, rgb.frac_a, rgb.frac_b,
                      rgb.empty_a, rgb.empty_b, cv, len(pred), len(gt))
