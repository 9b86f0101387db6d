"""PLY point clouds (binary little-endian or ASCII), plus CSV helpers."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import PlyParseError
from .geometry import ColoredPointCloud

_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def colors_to_u8(colors: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(colors, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_ply(path, cloud: ColoredPointCloud, ascii: bool = False) -> None:
    n = len(cloud)
    fields = [("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
              ("red", "u1"), ("green", "u1"), ("blue", "u1")]
    if cloud.udf is not None:
        fields.append(("udf", "<f4"))
    rec = np.zeros(n, dtype=fields)
    for i, ax in enumerate("xyz"):
        rec[ax] = cloud.positions[:, i]
    rgb = colors_to_u8(cloud.colors) if cloud.colors is not None else np.full((n, 3), 128, np.uint8)
    for i, ch in enumerate(("red", "green", "blue")):
        rec[ch] = rgb[:, i]
    if cloud.udf is not None:
        rec["udf"] = cloud.udf
    names = {"<f4": "float", "u1": "uchar"}
    header = ["ply", f"format {'ascii' if ascii else 'binary_little_endian'} 1.0",
              f"element vertex {n}"]
    header += [f"property {names[t]} {name}" for name, t in fields]
    header.append("end_header")
    with open(Path(path), "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if ascii:
            for row in rec:
                vals = [repr(float(row[name])) if t == "<f4" else str(int(row[name])) for name, t in fields]
                fh.write((" ".join(vals) + "\n").encode("ascii"))
        else:
            fh.write(rec.tobytes())


def read_ply(path) -> ColoredPointCloud:
    """Read the vertex element; x, y, z are required, colour and udf properties optional."""
    raw = Path(path).read_bytes()
    if not raw.startswith(b"ply\n") and not raw.startswith(b"ply\r\n"):
        raise PlyParseError("missing 'ply' magic", 0)
    offset = 0
    fmt = None
    elements: list[tuple[str, int, list[tuple[str, str]]]] = []
    while True:
        end = raw.find(b"\n", offset)
        if end < 0:
            raise PlyParseError("header not terminated by end_header", offset)
        line = raw[offset:end].decode("ascii", errors="replace").strip()
        start = offset
        offset = end + 1
        if line == "end_header":
            break
        parts = line.split()
        if not parts or parts[0] in ("ply", "comment", "obj_info"):
            continue
        if parts[0] == "format":
            if len(parts) != 3 or parts[1] not in ("ascii", "binary_little_endian"):
                raise PlyParseError(f"unsupported format line {line!r}", start)
            fmt = parts[1]
        elif parts[0] == "element":
            if len(parts) != 3 or not parts[2].isdigit():
                raise PlyParseError(f"bad element line {line!r}", start)
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if not elements:
                raise PlyParseError("property before any element", start)
            if len(parts) != 3 or parts[1] not in _TYPES:
                raise PlyParseError(f"unsupported property line {line!r}", start)
            elements[-1][2].append((parts[2], _TYPES[parts[1]]))
        else:
            raise PlyParseError(f"unexpected header line {line!r}", start)
    if fmt is None:
        raise PlyParseError("no format line in header", 0)
    if not elements or elements[0][0] != "vertex":
        raise PlyParseError("first element must be 'vertex'", 0)
    _, n, props = elements[0]
    dtype = np.dtype([(name, ("<" + t) if t[-1] != "1" else t) for name, t in props])
    if fmt == "binary_little_endian":
        need = n * dtype.itemsize
        if len(raw) - offset < need:
            raise PlyParseError(f"body truncated: need {need} bytes", len(raw))
        rec = np.frombuffer(raw, dtype=dtype, count=n, offset=offset)
    else:
        rec = np.zeros(n, dtype=dtype)
        for i in range(n):
            end = raw.find(b"\n", offset)
            end = len(raw) if end < 0 else end
            vals = raw[offset:end].split()
            if len(vals) < len(props):
                raise PlyParseError(f"vertex {i}: expected {len(props)} values", offset)
            try:
                rec[i] = tuple(float(v) if np.dtype(dtype[j]).kind == "f" else int(v)
                               for j, v in enumerate(vals[:len(props)]))
            except ValueError:
                raise PlyParseError(f"vertex {i}: malformed value", offset) from None
            offset = end + 1
    names = set(dtype.names)
    for ax in "xyz":
        if ax not in names:
            raise PlyParseError(f"vertex element lacks property {ax!r}", 0)
    pos = np.stack([rec["x"], rec["y"], rec["z"]], axis=1).astype(np.float64)
    colors = None
    if {"red", "green", "blue"} <= names:
        colors = np.stack([rec["red"], rec["green"], rec["blue"]], axis=1).astype(np.float64) / 255.0
    udf = rec["udf"].astype(np.float64) if "udf" in names else None
    return ColoredPointCloud(pos, colors, udf)


def write_points_csv(path, points: np.ndarray, extra: dict[str, np.ndarray] | None = None) -> None:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    extra = extra or {}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "z", *extra])
        cols = [np.asarray(v) for v in extra.values()]
        for i, p in enumerate(pts):
            w.writerow([repr(float(p[0])), repr(float(p[1])), repr(float(p[2])),
                        *(repr(float(c[i])) for c in cols)])
