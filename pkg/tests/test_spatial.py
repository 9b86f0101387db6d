import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from repudf.errors import InvalidArgumentError, InvalidInputError
from repudf.spatial import SpatialIndex, build_index, fps_sample, worker_count


def test_collinear_and_small():
    idx = build_index([[0, 0, 0], [1, 0, 0], [2, 0, 0]])
    assert sorted(i for i, _ in idx.knn_query([5, 5, 5], 3)) == [0, 1, 2]
    assert [i for i, _ in idx.knn_query([0.4, 0, 0], 2)] == [0, 1]


def test_coincident_query_first():
    pts = np.random.default_rng(1).normal(size=(30, 3))
    res = SpatialIndex(pts).knn_query(pts[17], 3)
    assert res[0] == (17, 0.0)


def test_duplicates_tie_break_by_id():
    pts = np.array([[1.0, 1, 1], [0, 0, 0], [1, 1, 1], [1, 1, 1]])
    res = SpatialIndex(pts).knn_query([1, 1, 1], 3)
    assert [i for i, _ in res] == [0, 2, 3]
    assert all(d == 0 for _, d in res)


def test_many_ties_beyond_overfetch():
    # Integer points at exactly distance 5 from the origin: far more ties than k + 4.
    ring = sorted({p for p in itertools.product(range(-5, 6), repeat=3) if sum(c * c for c in p) == 25})
    rng = np.random.default_rng(0)
    pts = np.array([ring[i] for i in rng.permutation(len(ring))], dtype=float)
    pts = np.vstack([[[9.0, 9, 9]], pts])
    ids, d = SpatialIndex(pts).knn(np.zeros(3), 3)
    assert len(ring) > 7
    assert list(ids) == [1, 2, 3] and np.all(d == 5.0)


def test_large_build():
    pts = np.random.default_rng(0).uniform(-1, 1, size=(48_000, 3))
    ids, _ = SpatialIndex(pts).knn(pts[:10], 1)
    assert list(ids[:, 0]) == list(range(10))


def test_radius_strict_and_all():
    idx = SpatialIndex([[0, 0, 0], [0.1, 0, 0], [0.05, 0, 0]])
    assert [i for i, _ in idx.radius_query([0, 0, 0], 0.1)] == [0, 2]
    assert len(idx.radius_query([0, 0, 0], 100)) == 3
    with pytest.raises(InvalidArgumentError):
        idx.radius_query([0, 0, 0], 0)


def test_knn_argument_errors():
    idx = SpatialIndex(np.zeros((4, 3)))
    with pytest.raises(InvalidArgumentError):
        idx.knn(np.zeros(3), 5)
    with pytest.raises(InvalidInputError):
        SpatialIndex(np.zeros((0, 3)))


def test_index_is_read_only_copy():
    pts = np.zeros((3, 3))
    idx = SpatialIndex(pts)
    pts[0] = 9
    assert np.all(idx.points == 0)
    with pytest.raises(ValueError):
        idx.points[0, 0] = 1


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 120), st.integers(1, 16))
def test_knn_matches_brute_force(seed, n, k):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(n, 3))
    if n > 3:
        pts[rng.integers(0, n, 3)] = pts[0]  # inject duplicates
    k = min(k, n)
    qs = rng.normal(size=(5, 3))
    ids, ds = SpatialIndex(pts).knn(qs, k)
    for q, row_i, row_d in zip(qs, ids, ds):
        ref_i, ref_d = oracles.knn(pts.tolist(), q.tolist(), k)
        assert list(row_i) == ref_i
        assert np.max(np.abs(row_d - ref_d)) <= 1e-12
        assert np.all(np.diff(row_d) >= 0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.05, 2.0))
def test_radius_matches_brute_force(seed, r):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(100, 3))
    q = rng.normal(size=3)
    got = SpatialIndex(pts).radius_query(q, r)
    ref = oracles.radius(pts.tolist(), q.tolist(), r)
    assert [i for i, _ in got] == [i for i, _ in ref]
    assert all(abs(a - b) <= 1e-12 and a < r for (_, a), (_, b) in zip(got, ref))


def test_fps_examples():
    assert list(fps_sample([[0, 0, 0], [1, 0, 0], [0.5, 0, 0]], 2, 0)) == [0, 1]
    pts = np.random.default_rng(4).normal(size=(20, 3))
    assert sorted(fps_sample(pts, 20)) == list(range(20))
    with pytest.raises(InvalidArgumentError):
        fps_sample(pts, 21)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 49))
def test_fps_matches_brute_force(seed, start):
    pts = np.random.default_rng(seed).normal(size=(50, 3))
    got = fps_sample(pts, 10, start)
    assert list(got) == oracles.fps(pts.tolist(), 10, start)
    far = np.argmax(np.linalg.norm(pts - pts[start], axis=1))
    assert got[0] == start and got[1] == far


def test_worker_cap_env(monkeypatch):
    monkeypatch.setenv("REPUDF_THREADS", "2")
    assert worker_count() == 2
    monkeypatch.setenv("REPUDF_THREADS", "nonsense")
    assert worker_count() == -1
    pts = np.random.default_rng(0).normal(size=(500, 3))
    monkeypatch.setenv("REPUDF_THREADS", "1")
    a = SpatialIndex(pts).knn(pts, 5)
    monkeypatch.delenv("REPUDF_THREADS")
    b = SpatialIndex(pts).knn(pts, 5)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
