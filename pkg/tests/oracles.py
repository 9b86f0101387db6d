"""Quadratic brute-force references, written independently of the library code paths."""
import math

import numpy as np


def dist(a, b, p=2):
    if p == 1:
        return sum(abs(x - y) for x, y in zip(a, b))
    return math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))


def knn(points, q, k, p=2):
    ranked = sorted(((dist(pt, q, p), i) for i, pt in enumerate(points)))
    return [i for _, i in ranked[:k]], [d for d, _ in ranked[:k]]


def radius(points, q, r):
    return sorted(((i, dist(pt, q)) for i, pt in enumerate(points) if dist(pt, q) < r),
                  key=lambda t: (t[1], t[0]))


def fps(points, count, start=0):
    chosen = [start]
    mind = [dist(p, points[start]) for p in points]
    while len(chosen) < count:
        best, best_d = -1, -1.0
        for i, d in enumerate(mind):
            if i not in chosen and d > best_d:
                best, best_d = i, d
        chosen.append(best)
        mind = [min(m, dist(p, points[best])) for m, p in zip(mind, points)]
    return chosen


def nearest_all(src, dst, p=2):
    """For each point of src: (id, distance) of its nearest dst point, smaller id on ties."""
    out = []
    for s in src:
        best = min(((dist(s, t, p), j) for j, t in enumerate(dst)))
        out.append((best[1], best[0]))
    return out


def chamfer_l1(pred, gt):
    a = [d for _, d in nearest_all(pred, gt, p=1)]
    b = [d for _, d in nearest_all(gt, pred, p=1)]
    return sum(a) / len(a) + sum(b) / len(b)


def f1(pred, gt, thr=0.1):
    prec = np.mean([d < thr for _, d in nearest_all(pred, gt)])
    rec = np.mean([d < thr for _, d in nearest_all(gt, pred)])
    return 0.0 if prec + rec == 0 else 200 * prec * rec / (prec + rec)


def l1_rgb(pred_pos, pred_col, gt_pos, gt_col, r=0.1):
    def term(src_pos, src_col, dst_pos, dst_col):
        vals = [sum(abs(src_col[i][c] - dst_col[j][c]) for c in range(3))
                for i, (j, d) in enumerate(nearest_all(src_pos, dst_pos)) if d < r]
        return sum(vals) / len(vals) if vals else 0.0
    return 0.5 * (term(pred_pos, pred_col, gt_pos, gt_col) + term(gt_pos, gt_col, pred_pos, pred_col))


def targets(queries, gt_pos, gt_col, r=0.1):
    near = nearest_all(queries, gt_pos)
    return ([d for _, d in near], [gt_col[j] for j, _ in near], [d < r for _, d in near])


def anchor_chamfer(x, g):
    a = [min(dist(p, q, 1) for q in g) for p in x]
    b = [min(dist(p, q, 1) for p in x) for q in g]
    return sum(a) / len(a) + sum(b) / len(b)


# Dense (vectorised) brute force: still a full pairwise scan, fast enough for 1,000-point instances.

def dense_dist(a, b, p=2):
    diff = np.asarray(a, float)[:, None, :] - np.asarray(b, float)[None, :, :]
    return np.abs(diff).sum(-1) if p == 1 else np.sqrt((diff * diff).sum(-1))


def dense_knn(points, queries, k):
    d = dense_dist(queries, points)
    order = np.lexsort((np.broadcast_to(np.arange(len(points)), d.shape), d), axis=1)[:, :k]
    return order, np.take_along_axis(d, order, axis=1)


def dense_fps(points, count, start=0):
    pts = np.asarray(points, float)
    chosen = [start]
    mind = dense_dist(pts, pts[start:start + 1])[:, 0]
    for _ in range(count - 1):
        nxt = int(np.argmax(mind))  # argmax returns the first (smallest id) maximum
        chosen.append(nxt)
        mind = np.minimum(mind, dense_dist(pts, pts[nxt:nxt + 1])[:, 0])
    return chosen


def dense_chamfer(a, b):
    d = dense_dist(a, b, p=1)
    return d.min(1).mean() + d.min(0).mean()


def dense_f1(a, b, thr=0.1):
    d = dense_dist(a, b)
    prec, rec = (d.min(1) < thr).mean(), (d.min(0) < thr).mean()
    return 0.0 if prec + rec == 0 else 200 * prec * rec / (prec + rec)


def dense_l1_rgb(pa, ca, pb, cb, r=0.1):
    d = dense_dist(pa, pb)

    def term(dmat, src_c, dst_c):
        j = dmat.argmin(1)
        ok = dmat.min(1) < r
        return np.abs(src_c[ok] - dst_c[j[ok]]).sum(1).mean() if ok.any() else 0.0

    return 0.5 * (term(d, ca, cb) + term(d.T, cb, ca))
