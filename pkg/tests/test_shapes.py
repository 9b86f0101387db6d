import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.stats import chisquare

import oracles
from repudf.errors import InvalidArgumentError, UndefinedGradientError
from repudf.extraction import AnalyticField, udf_shift_step
from repudf.shapes import (Box, LProfile, Sphere, Torus, eval_grad, eval_udf, make_partial_view,
                           parse_shape, sample_surface, smooth_position_color)

SHAPES = [Sphere(1.0), Sphere(0.7), Box((1.0, 0.5, 0.25)), Torus(1.0, 0.25), LProfile()]
coords = arrays(np.float64, (3,), elements=st.floats(-3, 3, allow_nan=False))


def test_udf_examples():
    assert eval_udf(Sphere(1), [2, 0, 0]) == 1.0
    assert abs(eval_udf(Torus(1, 0.25), [0, 0, 0]) - 0.75) < 1e-15
    assert abs(eval_udf(Box((1, 1, 1)), [2, 2, 0]) - np.sqrt(2)) < 1e-15


def test_box_udf_against_dense_samples():
    box = Box((1, 1, 1))
    surf = box.sample_surface(60_000, 3).positions
    for p in ([2, 2, 0], [0.2, 0.1, -0.3], [1.5, -0.2, 0.4]):
        brute = np.min(np.linalg.norm(surf - np.asarray(p, float), axis=1))
        assert abs(eval_udf(box, p) - brute) < 0.02
        assert eval_udf(box, p) <= brute + 1e-12


def test_grad_examples():
    np.testing.assert_allclose(eval_grad(Sphere(1), [2, 0, 0]), [1, 0, 0])
    with pytest.raises(UndefinedGradientError):
        eval_grad(Sphere(1), [0, 0, 0])
    with pytest.raises(UndefinedGradientError):
        eval_grad(Sphere(1), [1, 0, 0])  # on the surface
    with pytest.raises(UndefinedGradientError):
        eval_grad(Torus(1, 0.25), [0, 0, 0.4])  # the symmetry axis
    with pytest.raises(UndefinedGradientError):
        eval_grad(Box((1, 1, 1)), [0.5, 0.5, 0.0])  # equidistant from two faces


@pytest.mark.parametrize("shape", SHAPES, ids=lambda s: s.spec)
def test_grad_matches_finite_differences(shape):
    rng = np.random.default_rng(11)
    pts = rng.uniform(-2, 2, size=(400, 3))
    if isinstance(shape, LProfile):
        pts[:, 2] = rng.uniform(-0.5, 0.5, 400)
    g, valid = shape.grad(pts)
    h = 1e-5
    fd = np.stack([(shape.udf(pts + h * e) - shape.udf(pts - h * e)) / (2 * h) for e in np.eye(3)], axis=1)
    # Keep points comfortably away from the medial axis so the FD stencil stays on one branch.
    far = valid & (shape.udf(pts) > 1e-3)
    _, medial_nearby = shape.grad(pts, tol=1e-3)
    ok = far & medial_nearby
    assert ok.sum() > 250
    assert np.max(np.abs(g[ok] - fd[ok])) < 1e-4
    assert np.max(np.abs(np.linalg.norm(g[valid], axis=1) - 1)) < 1e-9


@pytest.mark.parametrize("shape", SHAPES, ids=lambda s: s.spec)
@settings(max_examples=80, deadline=None)
@given(p=coords, q=coords)
def test_udf_nonnegative_and_lipschitz(shape, p, q):
    a, b = shape.udf(np.stack([p, q]))
    assert a >= 0 and b >= 0
    assert abs(a - b) <= np.linalg.norm(p - q) + 1e-9


@pytest.mark.parametrize("shape", SHAPES, ids=lambda s: s.spec)
def test_surface_samples_on_surface(shape):
    c = sample_surface(shape, 2000, 5)
    assert len(c) == 2000
    assert np.max(shape.udf(c.positions)) <= 1e-6
    np.testing.assert_array_equal(c.colors, smooth_position_color(c.positions))
    again = shape.sample_surface(2000, 5)
    assert np.array_equal(c.positions, again.positions)


def test_sphere_and_lprofile_samples():
    s = Sphere(1).sample_surface(1000, 0).positions
    assert np.max(np.abs(np.linalg.norm(s, axis=1) - 1)) < 1e-6
    lp = LProfile().sample_surface(1000, 0).positions
    assert np.max(np.abs(lp[:, 2])) < 1e-6


def _face_counts(box, pts):
    h = np.array(box.half_extents)
    return np.array([np.sum(np.abs(pts[:, axis] - sign * h[axis]) < 1e-12)
                     for axis in range(3) for sign in (-1, 1)])


def test_box_face_counts_follow_areas():
    box = Box((1.0, 1.0, 1.0))
    counts = _face_counts(box, box.sample_surface(10_000, 1).positions)
    expected = 10_000 * box.face_areas() / box.face_areas().sum()
    assert np.all(np.abs(counts - expected) <= 0.05 * expected)


def test_box_face_counts_chi_square():
    box = Box((1.0, 0.5, 0.25))
    n = 100_000
    counts = _face_counts(box, box.sample_surface(n, 1).positions)
    assert counts.sum() == n
    expected = n * box.face_areas() / box.face_areas().sum()
    assert chisquare(counts, expected).pvalue > 1e-3


def test_torus_sampling_area_uniform():
    # Outer half of the tube (cos v > 0) carries (pi R + 2 r) / (2 pi R) of the area.
    t = Torus(1.0, 0.25)
    pts = t.sample_surface(40_000, 2).positions
    outer = np.hypot(pts[:, 0], pts[:, 1]) > 1.0
    expected = (np.pi * 1.0 + 2 * 0.25) / (2 * np.pi * 1.0)
    assert abs(outer.mean() - expected) < 0.01


def test_partial_view():
    view = make_partial_view(Sphere(1), [1, 0, 0], 4000, 3)
    assert np.all(view.positions[:, 0] >= -1e-6)
    assert abs(len(view) / 4000 - 0.5) < 0.05
    assert np.max(Sphere(1).udf(view.positions)) <= 1e-6
    noisy = make_partial_view(Sphere(1), [1, 0, 0], 4000, 3, noise=0.01)
    assert len(noisy) == len(view)
    assert 0.005 < np.mean(Sphere(1).udf(noisy.positions)) < 0.02
    with pytest.raises(InvalidArgumentError):
        make_partial_view(Sphere(1), [0, 0, 0], 10, 0)


def test_lprofile_geometry():
    lp = LProfile(2.4, 2.4, 0.8)
    assert abs(lp.perimeter - 2 * (2.4 + 2.4)) < 1e-12
    assert len(lp.convex_corners) == 5
    lo, hi = lp.vertices.min(0), lp.vertices.max(0)
    np.testing.assert_allclose(lo, -hi)
    # Brute force against a dense outline sampling.
    dense = lp.sample_surface(50_000, 0).positions
    q = np.random.default_rng(0).uniform(-2, 2, size=(20, 3))
    q[:, 2] = 0
    near = oracles.nearest_all(q.tolist(), dense.tolist())
    for u, (_, d) in zip(lp.udf(q), near):
        assert u <= d + 1e-12 and d - u < 0.01


def test_parse_shape():
    assert parse_shape("torus:1,0.25") == Torus(1.0, 0.25)
    assert parse_shape("box:1,0.5,0.5") == Box((1, 0.5, 0.5))
    assert parse_shape("sphere") == Sphere()
    assert parse_shape("lprofile:2,3,0.5").spec == "lprofile:2,3,0.5"
    for bad in ("blob", "sphere:x", "sphere:-1", "torus:1,2", "lprofile:1,1,2"):
        with pytest.raises(InvalidArgumentError):
            parse_shape(bad)


def test_one_shift_step_is_exact_on_sphere():
    rng = np.random.default_rng(0)
    p = rng.normal(size=(2000, 3))
    p *= rng.uniform(0.05, 3, size=(2000, 1)) / np.linalg.norm(p, axis=1, keepdims=True)
    out = udf_shift_step(p, AnalyticField(Sphere(1)))
    assert np.max(Sphere(1).udf(out)) < 1e-9
    np.testing.assert_allclose(udf_shift_step([[2.0, 0, 0]], AnalyticField(Sphere(1))), [[1, 0, 0]])
