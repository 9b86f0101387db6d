"""Anchor-based neighbourhood decoder.

Pipeline: partial cloud -> group tokens -> anchor predictor (transformer over
[global; tokens; anchor embeddings]) -> per-query gathering of the m nearest
anchors and n nearest fine features -> per-channel vector attention -> query
head producing a raw UDF value and 3 x 256 colour logits.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from ..autodiff import tensor as T
from ..autodiff.checkpoint import load_checkpoint, save_checkpoint
from ..autodiff.tensor import Tensor, parameter
from ..errors import InvalidArgumentError, InvalidInputError
from ..geometry import ColoredPointCloud
from ..rng import make_rng
from ..spatial import SpatialIndex, fps_sample
from .layers import MLP2, LayerNorm, Linear, Module, TransformerLayer

COLOR_BINS = 256


@dataclass(frozen=True)
class ModelConfig:
    d: int = 64
    num_tokens: int = 32          # N, group tokens from the partial cloud
    group_size: int = 16
    num_anchors: int = 200        # M
    k_coarse: int = 4             # m
    k_fine: int = 4               # n
    predictor_layers: int = 2
    predictor_heads: int = 4
    head_blocks: int = 5
    head_width: int = 64
    freq_bands: int = 10
    query_range: float = 3.0
    fine_stride: int = 1          # keep every stride-th seen point as a fine feature

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidArgumentError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ModelConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EncoderTokens:
    patches: Tensor          # (N, d)
    global_token: Tensor     # (d,)
    centers: np.ndarray      # (N, 3)


@dataclass
class AnchorSet:
    features: Tensor         # Z_c (M, d)
    locations: Tensor        # X_c (M, 3)
    global_token: Tensor     # z (d,)

    @property
    def count(self) -> int:
        return self.features.shape[0]


@dataclass
class FineFeatureSet:
    features: Tensor         # Z_f (P, d)
    locations: np.ndarray    # (P, 3)


@dataclass
class QueryBatch:
    queries: np.ndarray      # (Nq, 3)
    features: Tensor         # Z_q (Nq, m+n, d)
    locations: Tensor        # (Nq, m+n, 3)
    displacements: Tensor    # neighbour location minus query (Nq, m+n, 3)
    coarse_ids: np.ndarray   # (Nq, m)
    fine_ids: np.ndarray     # (Nq, n)


def frequency_encoding(q: np.ndarray, bands: int = 10, extent: float = 3.0) -> np.ndarray:
    """``[sin(2^k pi q / extent), cos(2^k pi q / extent)]`` for k < bands: R^3 -> R^(6 bands)."""
    q = np.asarray(q, dtype=np.float64).reshape(-1, 3)
    freqs = (2.0 ** np.arange(bands)) * np.pi / extent
    ang = (q[:, None, :] * freqs[:, None]).reshape(len(q), -1)   # (n, bands*3)
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


def group_partial_cloud(positions: np.ndarray, num_groups: int, group_size: int):
    """FPS centres (start: lexicographically smallest point) and kNN member ids."""
    n = len(positions)
    if n < num_groups:
        raise InvalidInputError(f"partial cloud has {n} points, need at least {num_groups}")
    start = int(np.lexsort(positions.T[::-1])[0])
    centers = fps_sample(positions, num_groups, start_id=start)
    size = max(1, min(group_size, n // num_groups))
    members, _ = SpatialIndex(positions).knn(positions[centers], size)
    return centers, members


class PartialCloudEncoder(Module):
    """Point-patch stand-in for an image encoder: FPS groups, shared MLP, max pooling."""

    def __init__(self, cfg: ModelConfig, rng):
        self.cfg = cfg
        self.point_mlp = MLP2(6, cfg.d, cfg.d, rng)
        self.center_embed = Linear(3, cfg.d, rng)
        self.global_proj = Linear(cfg.d, cfg.d, rng)

    def __call__(self, cloud: ColoredPointCloud) -> EncoderTokens:
        if len(cloud) == 0:
            raise InvalidInputError("cannot encode an empty cloud")
        pos = cloud.positions
        col = cloud.colors if cloud.colors is not None else np.full_like(pos, 0.5)
        centers, members = group_partial_cloud(pos, self.cfg.num_tokens, self.cfg.group_size)
        c = pos[centers]
        local = np.concatenate([pos[members] - c[:, None, :], col[members]], axis=-1)
        feats = T.max(self.point_mlp(Tensor(local)), axis=1)
        tokens = T.add(feats, self.center_embed(Tensor(c)))
        z0 = self.global_proj(T.mean(tokens, axis=0, keepdims=True))
        return EncoderTokens(tokens, T.reshape(z0, (self.cfg.d,)), c)


class AnchorPredictor(Module):
    def __init__(self, cfg: ModelConfig, rng):
        self.cfg = cfg
        self.anchor_embed = parameter(rng.normal(0.0, 0.5, size=(cfg.num_anchors, cfg.d)))
        self.layers = [TransformerLayer(cfg.d, cfg.predictor_heads, rng)
                       for _ in range(cfg.predictor_layers)]
        self.norm = LayerNorm(cfg.d)
        self.loc_head = Linear(cfg.d, 3, rng)

    def sequence(self, tokens: EncoderTokens) -> Tensor:
        d = self.cfg.d
        if tokens.patches.ndim != 2 or tokens.patches.shape[1] != d or tokens.global_token.shape != (d,):
            raise InvalidArgumentError(
                f"token shapes {tokens.patches.shape}/{tokens.global_token.shape} do not match d={d}")
        embeds = T.add(self.anchor_embed, tokens.global_token)   # E = E0 + broadcast(z0)
        return T.concat([T.reshape(tokens.global_token, (1, d)), tokens.patches, embeds], axis=0)

    def __call__(self, tokens: EncoderTokens) -> AnchorSet:
        x = self.sequence(tokens)
        for layer in self.layers:
            x = layer(x)
        x = self.norm(x)
        n_patch = tokens.patches.shape[0]
        anchors = x[1 + n_patch:]
        locs = T.scale(T.tanh(self.loc_head(anchors)), self.cfg.query_range)
        return AnchorSet(anchors, locs, x[0])


class FineProjection(Module):
    def __init__(self, cfg: ModelConfig, rng):
        self.proj = Linear(3, cfg.d, rng, bias=False)

    def __call__(self, cloud: ColoredPointCloud, stride: int = 1) -> FineFeatureSet:
        if len(cloud) == 0:
            raise InvalidInputError("fine features need a non-empty cloud")
        sel = np.arange(0, len(cloud), max(1, int(stride)))
        col = cloud.colors if cloud.colors is not None else np.full((len(cloud), 3), 0.5)
        return FineFeatureSet(self.proj(Tensor(col[sel])), cloud.positions[sel].copy())


class VectorAttention(Module):
    """Per-channel softmax weights over the gathered neighbours."""

    def __init__(self, cfg: ModelConfig, rng):
        d = cfg.d
        self.w_v = Linear(d, d, rng, bias=False)
        self.w_q = Linear(d, d, rng, bias=False)
        self.w_k = Linear(d, d, rng, bias=False)
        self.psi = MLP2(d, d, d, rng)
        self.delta = MLP2(3, d, d, rng)

    def weights(self, batch: QueryBatch, z: Tensor) -> Tensor:
        zq = T.reshape(self.w_q(T.reshape(z, (1, -1))), (z.shape[-1],))
        logits = T.add(T.add(self.w_k(batch.features), self.delta(batch.displacements)), zq)
        return T.softmax(self.psi(logits), axis=1)

    def __call__(self, batch: QueryBatch, z: Tensor) -> Tensor:
        w = self.weights(batch, z)
        return T.sum(T.mul(w, self.w_v(batch.features)), axis=1)


class ResnetBlock(Module):
    def __init__(self, width: int, rng):
        self.fc0 = Linear(width, width, rng)
        self.fc1 = Linear(width, width, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return T.add(x, self.fc1(T.relu(self.fc0(T.relu(x)))))


class QueryHead(Module):
    """Conditioned ResNet MLP on frequency-encoded query positions."""

    def __init__(self, cfg: ModelConfig, rng):
        self.cfg = cfg
        w = cfg.head_width
        self.fc_p = Linear(6 * cfg.freq_bands, w, rng)
        self.fc_c = [Linear(cfg.d, w, rng) for _ in range(cfg.head_blocks)]
        self.blocks = [ResnetBlock(w, rng) for _ in range(cfg.head_blocks)]
        self.fc_out = Linear(w, 1 + 3 * COLOR_BINS, rng)

    def __call__(self, queries: np.ndarray, zq: Tensor) -> tuple[Tensor, Tensor]:
        enc = frequency_encoding(queries, self.cfg.freq_bands, self.cfg.query_range)
        net = self.fc_p(Tensor(enc))
        for fc_c, block in zip(self.fc_c, self.blocks):
            net = block(T.add(net, fc_c(zq)))
        out = self.fc_out(T.relu(net))
        nq = len(enc)
        udf = T.reshape(out[:, 0:1], (nq,))
        logits = T.reshape(out[:, 1:], (nq, 3, COLOR_BINS))
        return udf, logits


@dataclass
class SceneContext:
    """Everything that is computed once per input cloud, independent of queries."""

    tokens: EncoderTokens
    anchors: AnchorSet
    fine: FineFeatureSet
    anchor_index: SpatialIndex
    fine_index: SpatialIndex


class NeighborhoodDecoder(Module):
    def __init__(self, cfg: ModelConfig | None = None, seed: int = 0):
        self.cfg = cfg or ModelConfig()
        rng = make_rng(seed, "model-init")
        self.encoder = PartialCloudEncoder(self.cfg, rng)
        self.predictor = AnchorPredictor(self.cfg, rng)
        self.fine_proj = FineProjection(self.cfg, rng)
        self.attention = VectorAttention(self.cfg, rng)
        self.head = QueryHead(self.cfg, rng)

    # -- stages ------------------------------------------------------------
    def encode(self, cloud: ColoredPointCloud) -> EncoderTokens:
        return self.encoder(cloud)

    def predict_anchors(self, tokens: EncoderTokens) -> AnchorSet:
        return self.predictor(tokens)

    def build_fine_features(self, cloud: ColoredPointCloud, stride: int | None = None) -> FineFeatureSet:
        return self.fine_proj(cloud, self.cfg.fine_stride if stride is None else stride)

    def context(self, cloud: ColoredPointCloud, fine_stride: int | None = None) -> SceneContext:
        tokens = self.encode(cloud)
        anchors = self.predict_anchors(tokens)
        fine = self.build_fine_features(cloud, fine_stride)
        return SceneContext(tokens, anchors, fine, SpatialIndex(anchors.locations.data),
                            SpatialIndex(fine.locations))

    def gather(self, queries, ctx: SceneContext, m: int | None = None, n: int | None = None) -> QueryBatch:
        m = self.cfg.k_coarse if m is None else m
        n = self.cfg.k_fine if n is None else n
        return gather_neighbors(queries, ctx, m, n)

    def aggregate(self, batch: QueryBatch, z: Tensor) -> Tensor:
        return self.attention(batch, z)

    def decode(self, queries, zq: Tensor) -> tuple[Tensor, Tensor]:
        return self.head(np.asarray(queries, dtype=np.float64).reshape(-1, 3), zq)

    def query(self, queries, ctx: SceneContext, m: int | None = None, n: int | None = None):
        batch = self.gather(queries, ctx, m, n)
        zq = self.aggregate(batch, ctx.anchors.global_token)
        return self.decode(batch.queries, zq)

    # -- persistence -------------------------------------------------------
    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.named_parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.named_parameters()
        missing = set(params) - set(state)
        extra = set(state) - set(params)
        if missing or extra:
            raise InvalidInputError(f"state mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for k, p in params.items():
            if state[k].shape != p.shape:
                raise InvalidInputError(f"{k}: shape {state[k].shape} != {p.shape}")
            p.data = np.array(state[k], dtype=np.float64)

    def save(self, path, meta: dict | None = None) -> None:
        save_checkpoint(path, self.state_dict(), {"model_config": self.cfg.to_dict(), **(meta or {})})

    @classmethod
    def load(cls, path) -> tuple["NeighborhoodDecoder", dict]:
        state, meta = load_checkpoint(path)
        model = cls(ModelConfig.from_dict(meta["model_config"]))
        model.load_state_dict(state)
        return model, meta


def gather_neighbors(queries, ctx: SceneContext, m: int, n: int) -> QueryBatch:
    """Coarse block (m nearest anchors) followed by fine block (n nearest seen points)."""
    q = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
    nq = len(q)
    if not 1 <= m <= ctx.anchors.count:
        raise InvalidArgumentError(f"m={m} must be in [1, {ctx.anchors.count}]")
    if not 0 <= n <= len(ctx.fine.locations):
        raise InvalidArgumentError(f"n={n} must be in [0, {len(ctx.fine.locations)}]")
    cid, _ = ctx.anchor_index.knn(q, m)
    feats = [T.gather(ctx.anchors.features, cid)]
    locs = [T.gather(ctx.anchors.locations, cid)]
    if n > 0:
        fid, _ = ctx.fine_index.knn(q, n)
        feats.append(T.gather(ctx.fine.features, fid))
        locs.append(Tensor(ctx.fine.locations[fid]))
    else:
        fid = np.zeros((nq, 0), dtype=np.int64)
    zq = feats[0] if len(feats) == 1 else T.concat(feats, axis=1)
    loc = locs[0] if len(locs) == 1 else T.concat(locs, axis=1)
    disp = T.sub(loc, Tensor(np.broadcast_to(q[:, None, :], loc.shape).copy()))
    return QueryBatch(q, zq, loc, disp, cid, fid)
