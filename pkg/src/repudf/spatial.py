"""Exact nearest-neighbour queries and farthest point sampling.

The tree itself is scipy's ``cKDTree``. On top of it this module enforces the
package-wide contract: results equal a brute-force scan, distances are
recomputed in float64 as ``sqrt(sum((p - q)**2))``, and equal distances are
ordered by the smaller point id.
"""
from __future__ import annotations

import os

import numpy as np
from scipy.spatial import cKDTree

from .errors import InvalidArgumentError, InvalidInputError


def worker_count() -> int:
    """Worker cap from ``REPUDF_THREADS`` (unset or invalid: all cores, i.e. -1)."""
    raw = os.environ.get("REPUDF_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        return -1
    return n if n >= 1 else -1


def _distances(points: np.ndarray, q: np.ndarray, p: float) -> np.ndarray:
    diff = points - q
    if p == 1:
        return np.abs(diff).sum(axis=-1)
    return np.sqrt(np.sum(diff * diff, axis=-1))


class SpatialIndex:
    """Immutable k-d tree over an ``(n, 3)`` point array.

    ``p`` selects the Minkowski norm (2 = Euclidean, 1 = L1); it only exists so
    that the L1 chamfer terms can reuse the same tie-breaking machinery.
    """

    def __init__(self, points, p: float = 2):
        pts = np.array(points, dtype=np.float64, copy=True)
        if pts.ndim == 1 and pts.size == 3:
            pts = pts.reshape(1, 3)
        if pts.ndim != 2 or len(pts) == 0:
            raise InvalidInputError("spatial index needs at least one point")
        if p not in (1, 2):
            raise InvalidArgumentError(f"unsupported norm p={p}")
        pts.setflags(write=False)
        self._points = pts
        self._p = p
        self._tree = cKDTree(pts, balanced_tree=True, compact_nodes=True)

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def count(self) -> int:
        return len(self._points)

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self._points.min(axis=0), self._points.max(axis=0)

    # -- k nearest ---------------------------------------------------------
    def knn(self, queries, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Batched k-NN. Returns ``(ids, dists)`` of shape ``(nq, k)``, ascending."""
        q = np.asarray(queries, dtype=np.float64)
        single = q.ndim == 1
        q = q.reshape(-1, self._points.shape[1])
        if not 1 <= k <= self.count:
            raise InvalidArgumentError(f"k={k} must be in [1, {self.count}]")
        nq = len(q)
        if nq == 0:
            return np.zeros((0, k), np.int64), np.zeros((0, k))
        # Over-fetch so that ties straddling the k-th slot can be resolved by id.
        extra = min(self.count, k + 4)
        _, cand = self._tree.query(q, k=extra, p=self._p, workers=worker_count())
        cand = np.asarray(cand, dtype=np.int64).reshape(nq, extra)
        d = _distances(self._points[cand], q[:, None, :], self._p)
        order = np.lexsort((cand, d), axis=-1)
        cand = np.take_along_axis(cand, order, axis=1)
        d = np.take_along_axis(d, order, axis=1)
        ids, dists = cand[:, :k].copy(), d[:, :k].copy()
        # Rows whose k-th distance also appears outside the fetched set need a wider look.
        if extra < self.count:
            kth = dists[:, -1]
            ambiguous = d[:, -1] <= kth * (1 + 1e-12) + 1e-300
            for row in np.flatnonzero(ambiguous):
                ids[row], dists[row] = self._knn_exact_row(q[row], k, kth[row])
        if single:
            return ids[0], dists[0]
        return ids, dists

    def _knn_exact_row(self, q, k, kth):
        near = self._tree.query_ball_point(q, kth * (1 + 1e-9) + 1e-12, p=self._p)
        near = np.asarray(sorted(near), dtype=np.int64)
        d = _distances(self._points[near], q, self._p)
        order = np.lexsort((near, d))[:k]
        return near[order], d[order]

    def knn_query(self, q, k: int) -> list[tuple[int, float]]:
        ids, d = self.knn(np.asarray(q, dtype=np.float64).reshape(3), k)
        return [(int(i), float(x)) for i, x in zip(ids, d)]

    def nearest(self, queries) -> tuple[np.ndarray, np.ndarray]:
        ids, d = self.knn(np.asarray(queries, dtype=np.float64).reshape(-1, 3), 1)
        return ids[:, 0], d[:, 0]

    # -- radius ------------------------------------------------------------
    def radius_query(self, q, r: float) -> list[tuple[int, float]]:
        """All points with distance strictly below ``r``, ascending by (distance, id)."""
        if not r > 0:
            raise InvalidArgumentError(f"radius must be positive, got {r}")
        q = np.asarray(q, dtype=np.float64).reshape(3)
        near = np.asarray(self._tree.query_ball_point(q, r * (1 + 1e-9), p=self._p), dtype=np.int64)
        if near.size == 0:
            return []
        d = _distances(self._points[near], q, self._p)
        keep = d < r
        near, d = near[keep], d[keep]
        order = np.lexsort((near, d))
        return [(int(i), float(x)) for i, x in zip(near[order], d[order])]


def build_index(points, p: float = 2) -> SpatialIndex:
    return SpatialIndex(points, p=p)


def fps_sample(points, count: int, start_id: int = 0) -> np.ndarray:
    """Greedy farthest point sampling; ties go to the smaller id."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = len(pts)
    if not 1 <= count <= n:
        raise InvalidArgumentError(f"count={count} must be in [1, {n}]")
    if not 0 <= start_id < n:
        raise InvalidArgumentError(f"start id {start_id} out of range")
    chosen = np.empty(count, dtype=np.int64)
    chosen[0] = start_id
    mind = np.sqrt(np.sum((pts - pts[start_id]) ** 2, axis=1))
    mind[start_id] = -1.0
    for i in range(1, count):
        nxt = int(np.argmax(mind))  # first maximum = smallest id
        chosen[i] = nxt
        d = np.sqrt(np.sum((pts - pts[nxt]) ** 2, axis=1))
        np.minimum(mind, d, out=mind)
        mind[nxt] = -1.0
    return chosen
