"""Seeded random streams.

Every random draw in the package comes from ``numpy.random.Generator`` backed by
PCG64. Sub-streams are derived with ``SeedSequence(root, spawn_key=(tag,))``
where ``tag`` is a stable 32-bit hash of a subsystem name, so adding a new
consumer never perturbs the streams of the existing ones.
"""
from __future__ import annotations

import zlib

import numpy as np


def _tag(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def make_rng(seed: int, stream: str | None = None) -> np.random.Generator:
    if stream is None:
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))
    ss = np.random.SeedSequence(int(seed), spawn_key=(_tag(stream),))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, stream: str) -> int:
    """A 63-bit integer seed for ``stream`` derived from a root seed."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(_tag(stream),))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
