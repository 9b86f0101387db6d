"""Flat binary checkpoint: JSON manifest plus little-endian float64 payload.

Layout::

    b"REPUDFCK"            8-byte magic
    uint64 LE              manifest length in bytes
    manifest               UTF-8 JSON {"version", "meta", "tensors": [{name, shape, offset}]}
    payload                concatenated '<f8' arrays; offsets are relative to payload start
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import InvalidInputError

MAGIC = b"REPUDFCK"
VERSION = 1


def save_checkpoint(path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    entries, blobs, offset = [], [], 0
    for name in sorted(tensors):
        arr = np.array(tensors[name], dtype="<f8", order="C")  # keeps 0-d shapes
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blob = arr.tobytes()
        blobs.append(blob)
        offset += len(blob)
    manifest = json.dumps({"version": VERSION, "meta": meta or {}, "tensors": entries},
                          sort_keys=True).encode("utf-8")
    with open(Path(path), "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(manifest)))
        fh.write(manifest)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise InvalidInputError(f"{path}: not a checkpoint (bad magic)")
    (mlen,) = struct.unpack("<Q", raw[8:16])
    manifest = json.loads(raw[16:16 + mlen].decode("utf-8"))
    payload = memoryview(raw)[16 + mlen:]
    out = {}
    for e in manifest["tensors"]:
        n = int(np.prod(e["shape"])) if e["shape"] else 1
        start = e["offset"]
        if start + 8 * n > len(payload):
            raise InvalidInputError(f"{path}: truncated tensor {e['name']}")
        out[e["name"]] = np.frombuffer(payload[start:start + 8 * n], dtype="<f8").reshape(tuple(e["shape"])).astype(np.float64)
    return out, manifest.get("meta", {})
