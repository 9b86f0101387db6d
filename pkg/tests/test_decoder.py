import numpy as np
import pytest

from repudf.autodiff import Tensor, grad_check
from repudf.autodiff import tensor as T
from repudf.checks import TINY_MODEL, check_pipeline
from repudf.decoder import (ModelConfig, NeighborhoodDecoder, QueryBatch, decode_colors,
                            frequency_encoding, gather_neighbors)
from repudf.errors import InvalidArgumentError, InvalidInputError
from repudf.geometry import ColoredPointCloud
from repudf.shapes import Sphere, make_partial_view

SMALL = ModelConfig(d=16, num_tokens=8, group_size=8, num_anchors=20, predictor_layers=1,
                    predictor_heads=2, head_blocks=2, head_width=16)


@pytest.fixture(scope="module")
def cloud():
    return make_partial_view(Sphere(1), [0.5, 0.3, 1.0], 400, 2)


@pytest.fixture(scope="module")
def model():
    return NeighborhoodDecoder(SMALL, seed=3)


def test_default_dimensions(cloud):
    m = NeighborhoodDecoder(seed=0)
    ctx = m.context(cloud)
    assert ctx.anchors.count == 200
    assert ctx.anchors.features.shape == (200, 64)
    assert ctx.anchors.global_token.shape == (64,)
    assert ctx.tokens.patches.shape == (32, 64)
    seq = m.predictor.sequence(ctx.tokens)
    assert seq.shape == (1 + 32 + 200, 64)
    assert np.all(np.abs(ctx.anchors.locations.data) <= 3.0)


def test_frequency_encoding():
    enc = frequency_encoding(np.random.default_rng(0).normal(size=(5, 3)))
    assert enc.shape == (5, 60)
    q = np.array([[0.3, -1.2, 2.0]])
    e = frequency_encoding(q, 10, 3.0)
    k, axis = 4, 1
    assert e[0, k * 3 + axis] == pytest.approx(np.sin(2 ** k * np.pi * q[0, axis] / 3.0))
    assert e[0, 30 + k * 3 + axis] == pytest.approx(np.cos(2 ** k * np.pi * q[0, axis] / 3.0))


def test_decode_colors():
    logits = np.zeros((2, 3, 256))
    logits[0, :, 255] = 1
    logits[1, 0, 0] = 5
    logits[1, 1, 128] = 5
    logits[1, 2, 7] = 5
    rgb = decode_colors(Tensor(logits))
    np.testing.assert_array_equal(rgb, [[1, 1, 1], [0, 128 / 255, 7 / 255]])


def test_encoder_tokens_exactly_n_points():
    pts = np.random.default_rng(0).normal(size=(8, 3))
    m = NeighborhoodDecoder(SMALL, seed=0)
    tok = m.encode(ColoredPointCloud(pts, np.full((8, 3), 0.5)))
    np.testing.assert_array_equal(np.sort(tok.centers, axis=0), np.sort(pts, axis=0))


def test_encoder_permutation_invariance(model, cloud):
    perm = np.random.default_rng(9).permutation(len(cloud))
    a = model.encode(cloud)
    b = model.encode(cloud.subset(perm))
    assert np.array_equal(a.patches.data, b.patches.data)
    assert np.array_equal(a.global_token.data, b.global_token.data)


def test_encoder_rejects_small_cloud(model):
    with pytest.raises(InvalidInputError):
        model.encode(ColoredPointCloud(np.zeros((3, 3))))


def test_encoder_grad_check(cloud):
    m = NeighborhoodDecoder(TINY_MODEL, seed=1)
    small = cloud.subset(np.arange(40))
    params = list(m.encoder.named_parameters().values())
    w = np.random.default_rng(0).normal(size=(TINY_MODEL.num_tokens, TINY_MODEL.d))
    err = grad_check(lambda: T.sum(T.mul(m.encode(small).patches, Tensor(w))), params, entries=4)
    assert err < 1e-4


def test_fine_features(model):
    cols = np.array([[0.2, 0.4, 0.6], [0.2, 0.4, 0.6], [0.9, 0.1, 0.0], [0.3, 0.3, 0.3]])
    c = ColoredPointCloud(np.random.default_rng(0).normal(size=(4, 3)), cols)
    f = model.build_fine_features(c)
    assert np.array_equal(f.features.data[0], f.features.data[1])
    assert model.build_fine_features(c, stride=2).features.shape[0] == 2
    zero = NeighborhoodDecoder(SMALL, seed=3)
    zero.fine_proj.proj.weight.data[:] = 0
    assert np.all(zero.build_fine_features(c).features.data == 0)


def test_gather_sizes_and_coincident_anchor(model, cloud):
    ctx = model.context(cloud)
    q = np.vstack([ctx.anchors.locations.data[5], [0.1, 0.2, 0.3]])
    b = gather_neighbors(q, ctx, 4, 4)
    assert b.features.shape == (2, 8, SMALL.d)
    assert b.coarse_ids[0, 0] == 5
    assert np.all(b.displacements.data[0, 0] == 0)
    b0 = gather_neighbors(q, ctx, 4, 0)
    assert b0.features.shape == (2, 4, SMALL.d) and b0.fine_ids.shape == (2, 0)
    with pytest.raises(InvalidArgumentError):
        gather_neighbors(q, ctx, 0, 4)
    with pytest.raises(InvalidArgumentError):
        gather_neighbors(q, ctx, SMALL.num_anchors + 1, 4)


def _batch(features, disp):
    nq = features.shape[0]
    return QueryBatch(np.zeros((nq, 3)), Tensor(features), Tensor(disp), Tensor(disp),
                      np.zeros((nq, 1), np.int64), np.zeros((nq, 0), np.int64))


def test_single_neighbour_weight_is_one(model):
    rng = np.random.default_rng(0)
    feats = rng.normal(size=(3, 1, SMALL.d))
    b = _batch(feats, rng.normal(size=(3, 1, 3)))
    z = Tensor(rng.normal(size=SMALL.d))
    w = model.attention.weights(b, z).data
    assert np.all(w == 1.0)
    out = model.attention(b, z).data
    np.testing.assert_array_equal(out, model.attention.w_v(Tensor(feats)).data[:, 0])


def test_identical_neighbours_split_evenly(model):
    rng = np.random.default_rng(1)
    f = rng.normal(size=(2, 1, SMALL.d))
    d = rng.normal(size=(2, 1, 3))
    b = _batch(np.concatenate([f, f], axis=1), np.concatenate([d, d], axis=1))
    z = Tensor(rng.normal(size=SMALL.d))
    np.testing.assert_array_equal(model.attention.weights(b, z).data, 0.5)
    np.testing.assert_allclose(model.attention(b, z).data, model.attention.w_v(Tensor(f)).data[:, 0],
                               rtol=1e-14, atol=1e-15)


def test_weights_sum_to_one_per_channel(model, cloud):
    ctx = model.context(cloud)
    b = model.gather(np.random.default_rng(0).uniform(-2, 2, size=(50, 3)), ctx, 6, 5)
    w = model.attention.weights(b, ctx.anchors.global_token).data
    assert w.shape == (50, 11, SMALL.d)
    np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-12)


def test_aggregation_grad_check(model, cloud):
    ctx = model.context(cloud)
    b = model.gather(np.random.default_rng(2).uniform(-1, 1, size=(4, 3)), ctx, 3, 2)
    params = list(model.attention.named_parameters().values())
    feats = Tensor(b.features.data.copy())
    batch = QueryBatch(b.queries, feats, b.locations, Tensor(b.displacements.data), b.coarse_ids, b.fine_ids)
    z = Tensor(ctx.anchors.global_token.data.copy())
    w = np.random.default_rng(3).normal(size=(4, SMALL.d))
    err = grad_check(lambda: T.sum(T.mul(model.attention(batch, z), Tensor(w))), params + [feats, z], entries=6)
    assert err < 1e-4


def test_locality(model, cloud):
    ctx = model.context(cloud)
    q = np.array([[0.0, 0.0, 1.0], [0.1, 0.1, 0.9]])
    f0, c0 = model.query(q, ctx)
    used = set(model.gather(q, ctx).coarse_ids.ravel())
    far = next(i for i in range(ctx.anchors.count) if i not in used)
    ctx.anchors.features.data[far] += 100.0
    f1, c1 = model.query(q, ctx)
    assert np.array_equal(f0.data, f1.data) and np.array_equal(c0.data, c1.data)


def test_flexible_k_at_inference(model, cloud):
    ctx = model.context(cloud)
    q = np.random.default_rng(0).uniform(-1, 1, size=(7, 3))
    f, logits = model.query(q, ctx, 12, 12)
    assert f.shape == (7,) and logits.shape == (7, 3, 256)
    assert model.gather(q, ctx, 12, 12).features.shape[1] == 24


def test_full_pipeline_grad_check():
    for seed in range(2):
        assert check_pipeline(seed).error < 1e-4


def test_save_load_round_trip(tmp_path, model, cloud):
    path = tmp_path / "m.ckpt"
    model.save(path, {"note": "x"})
    other, meta = NeighborhoodDecoder.load(path)
    assert meta["note"] == "x" and other.cfg == SMALL
    q = np.array([[0.2, 0.1, 0.3]])
    a = model.query(q, model.context(cloud))[0].data
    b = other.query(q, other.context(cloud))[0].data
    assert np.array_equal(a, b)
    with pytest.raises(InvalidInputError):
        other.load_state_dict({})


def test_same_seed_same_model():
    a = NeighborhoodDecoder(SMALL, seed=4).state_dict()
    b = NeighborhoodDecoder(SMALL, seed=4).state_dict()
    assert a.keys() == b.keys() and all(np.array_equal(a[k], b[k]) for k in a)


def test_config_rejects_unknown_keys():
    with pytest.raises(InvalidArgumentError):
        ModelConfig.from_dict({"d": 8, "bogus": 1})
    assert ModelConfig.from_dict(SMALL.to_dict()) == SMALL
