from .model import (
    COLOR_BINS,
    AnchorSet,
    EncoderTokens,
    FineFeatureSet,
    ModelConfig,
    NeighborhoodDecoder,
    QueryBatch,
    SceneContext,
    frequency_encoding,
    gather_neighbors,
)

__all__ = [
    "COLOR_BINS", "AnchorSet", "EncoderTokens", "FineFeatureSet", "ModelConfig",
    "NeighborhoodDecoder", "QueryBatch", "SceneContext", "frequency_encoding", "gather_neighbors",
    "decode_colors",
]


def decode_colors(logits):
    """Argmax per channel mapped to ``{0..255} / 255``."""
    import numpy as np

    data = getattr(logits, "data", logits)
    return np.argmax(data, axis=-1).astype(np.float64) / (COLOR_BINS - 1)
