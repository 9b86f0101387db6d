import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from repudf.errors import InvalidInputError
from repudf.geometry import (ColoredPointCloud, Similarity, apply_augmentation, denormalize,
                             draw_augmentation, normalize_to_unit, rotation_xyz,
                             sample_query_points)
from repudf.rng import derive_seed, make_rng

finite = st.floats(-100, 100, allow_nan=False, allow_infinity=False)
clouds = arrays(np.float64, st.tuples(st.integers(2, 40), st.just(3)), elements=finite)


def test_normalize_two_points_by_hand():
    cloud = ColoredPointCloud(np.array([[0.0, 0, 0], [2.0, 0, 0]]))
    out, tf = normalize_to_unit(cloud)
    np.testing.assert_allclose(tf.centroid, [1, 0, 0], atol=1e-15)
    np.testing.assert_allclose(out.positions, [[-np.sqrt(3), 0, 0], [np.sqrt(3), 0, 0]], atol=1e-12)


def test_normalize_degenerate():
    with pytest.raises(InvalidInputError):
        normalize_to_unit(ColoredPointCloud(np.array([[5.0, 5, 5], [5.0, 5, 5]])))


def test_normalize_fixed_point():
    rng = np.random.default_rng(3)
    once, _ = normalize_to_unit(ColoredPointCloud(rng.normal(size=(50, 3)) * 4 + 2))
    _, tf = normalize_to_unit(once)
    assert abs(tf.scale - 1) < 1e-6
    assert np.max(np.abs(tf.centroid)) < 1e-9


@settings(max_examples=60, deadline=None)
@given(clouds)
def test_normalize_round_trip(pts):
    assume(np.mean(np.sum((pts - pts.mean(0)) ** 2, axis=1)) > 1e-6)
    cloud = ColoredPointCloud(pts)
    out, tf = normalize_to_unit(cloud)
    assert abs(np.mean(np.sum(out.positions ** 2, axis=1)) - 3.0) < 1e-9
    back = denormalize(out, tf)
    assert np.max(np.abs(back.positions - pts)) < 1e-9


def test_query_points_examples():
    q = sample_query_points(550, 3.0, 7)
    assert q.shape == (550, 3) and np.all(np.abs(q) <= 3)
    one = sample_query_points(1, 1e-4, 0)
    assert np.linalg.norm(one) < 1e-4 * np.sqrt(3)
    assert np.array_equal(sample_query_points(100, 3, 5), sample_query_points(100, 3, 5))
    assert not np.array_equal(sample_query_points(100, 3, 5), sample_query_points(100, 3, 6))
    assert np.all(sample_query_points(50, 3, 1, planar=True)[:, 2] == 0)


def test_query_points_bad_args():
    with pytest.raises(InvalidInputError):
        sample_query_points(0)
    with pytest.raises(InvalidInputError):
        sample_query_points(5, 0.0)


def test_rotation_order_and_orthogonality():
    r = rotation_xyz(0.3, -1.1, 2.0)
    np.testing.assert_allclose(r @ r.T, np.eye(3), atol=1e-12)
    assert abs(np.linalg.det(r) - 1) < 1e-12
    # X applied first: a pure X rotation leaves the x axis fixed before Y and Z act.
    rx = rotation_xyz(0.7, 0, 0)
    np.testing.assert_allclose(rx @ [1, 0, 0], [1, 0, 0], atol=1e-15)
    np.testing.assert_allclose(rotation_xyz(0.3, 0.4, 0.5),
                               rotation_xyz(0, 0, 0.5) @ rotation_xyz(0, 0.4, 0) @ rotation_xyz(0.3, 0, 0))


def test_identity_augmentation():
    cloud = ColoredPointCloud(np.random.default_rng(0).normal(size=(10, 3)))
    out = apply_augmentation(cloud, 0, transform=Similarity(1.0, rotation_xyz(0, 0, 0)))
    np.testing.assert_array_equal(out.positions, cloud.positions)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32), st.floats(0.01, 10))
def test_augmentation_scales_distances(seed, d):
    cloud = ColoredPointCloud(np.array([[0.0, 0, 0], [d, 0, 0]]), np.array([[0.1, 0.2, 0.3], [1, 0, 0.5]]))
    out = apply_augmentation(cloud, seed)
    nd = np.linalg.norm(out.positions[1] - out.positions[0])
    assert 0.8 * d - 1e-9 <= nd <= 1.2 * d + 1e-9
    assert len(out) == 2 and np.array_equal(out.colors, cloud.colors)
    again = apply_augmentation(cloud, seed)
    assert np.array_equal(out.positions, again.positions)


def test_augmentation_scale_range():
    scales = [draw_augmentation(s).scale for s in range(300)]
    assert 0.8 <= min(scales) and max(scales) <= 1.2


def test_cloud_validation():
    with pytest.raises(InvalidInputError):
        ColoredPointCloud(np.zeros((3, 3)), np.full((3, 3), 1.5))
    with pytest.raises(InvalidInputError):
        ColoredPointCloud(np.array([[np.nan, 0, 0]]))
    with pytest.raises(InvalidInputError):
        ColoredPointCloud(np.zeros((2, 3)), np.zeros((3, 3)))
    c = ColoredPointCloud(np.arange(12.0).reshape(4, 3), np.zeros((4, 3)), np.ones(4))
    s = c.subset([1, 3])
    assert len(s) == 2 and np.array_equal(s.positions[1], [9, 10, 11])


def test_rng_streams_independent_and_stable():
    a = make_rng(1, "x").random(5)
    assert np.array_equal(a, make_rng(1, "x").random(5))
    assert not np.array_equal(a, make_rng(1, "y").random(5))
    assert derive_seed(1, "x") == derive_seed(1, "x") != derive_seed(2, "x")
    assert 0 <= derive_seed(123, "s") < 2**63
