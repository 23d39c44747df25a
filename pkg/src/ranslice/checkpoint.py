"""Versioned parameter checkpoint.

Byte layout (all integers little-endian)::

    offset 0   8 bytes   magic  b"RSLICECK"
    offset 8   u32       format version (1)
    offset 12  u32       header length H in bytes
    offset 16  H bytes   UTF-8 JSON header, keys sorted:
                         {"meta": {...}, "tensors": [{"name", "shape"}, ...]}
    offset 16+H          float64 little-endian data of every tensor, in header
                         order, each flattened row-major

The file is byte-identical for identical inputs.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path
from typing import Any, Mapping

import numpy as np

MAGIC = b"RSLICECK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(arrays: Mapping[str, np.ndarray], meta: Mapping[str, Any] | None = None) -> bytes:
    tensors = [{"name": k, "shape": list(np.shape(v))} for k, v in arrays.items()]
    header = json.dumps({"meta": dict(meta or {}), "tensors": tensors}, sort_keys=True,
                        separators=(",", ":")).encode()
    body = b"".join(np.ascontiguousarray(v, dtype="<f8").tobytes() for v in arrays.values())
    return MAGIC + struct.pack("<II", VERSION, len(header)) + header + body


def loads(blob: bytes) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    if blob[:8] != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    if len(blob) < 16:
        raise CheckpointError("truncated checkpoint header")
    version, hlen = struct.unpack("<II", blob[8:16])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    try:
        header = json.loads(blob[16:16 + hlen])
    except ValueError as exc:
        raise CheckpointError(f"corrupt header: {exc}") from None
    arrays: dict[str, np.ndarray] = {}
    off = 16 + hlen
    for t in header["tensors"]:
        n = int(np.prod(t["shape"], dtype=np.int64))
        end = off + 8 * n
        if end > len(blob):
            raise CheckpointError(f"truncated data for tensor {t['name']!r}")
        arrays[t["name"]] = np.frombuffer(blob[off:end], dtype="<f8").reshape(t["shape"]).copy()
        off = end
    if off != len(blob):
        raise CheckpointError(f"{len(blob) - off} trailing bytes")
    return arrays, header["meta"]


def save(path: str | Path, arrays: Mapping[str, np.ndarray],
         meta: Mapping[str, Any] | None = None) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(dumps(arrays, meta))
    os.replace(tmp, path)


def load(path: str | Path) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    return loads(Path(path).read_bytes())
