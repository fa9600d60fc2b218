"""Binary parameter container plus a JSON sidecar.

Layout (all integers little-endian)::

    magic      8 bytes   b"TXCKPT\\x00\\x01"
    version    u32
    count      u32
    table      count x (u16 name length, utf-8 name, u8 ndim, ndim x u64 dims)
    payload    float64 little-endian values, tensors in table order
    checksum   32 bytes  sha256 of everything above
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = b"TXCKPT\x00\x01"
VERSION = 1

__all__ = ["dumps", "loads", "save", "load", "sidecar_path", "MAGIC", "VERSION"]


def dumps(arrays: dict) -> bytes:
    names = list(arrays)
    head = [MAGIC, struct.pack("<II", VERSION, len(names))]
    body = []
    for name in names:
        arr = np.asarray(arrays[name], dtype="<f8")
        raw = name.encode("utf-8")
        head.append(struct.pack("<H", len(raw)) + raw)
        head.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
        body.append(arr.tobytes(order="C"))
    blob = b"".join(head) + b"".join(body)
    return blob + hashlib.sha256(blob).digest()


def loads(blob: bytes) -> dict:
    if len(blob) < len(MAGIC) + 8 + 32 or blob[:len(MAGIC)] != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    data, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(data).digest() != digest:
        raise CheckpointError("checksum mismatch: checkpoint is corrupt")
    pos = len(MAGIC)
    version, count = struct.unpack_from("<II", data, pos)
    pos += 8
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    table = []
    for _ in range(count):
        (n,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos:pos + n].decode("utf-8")
        pos += n
        (ndim,) = struct.unpack_from("<B", data, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}Q", data, pos)
        pos += 8 * ndim
        table.append((name, shape))
    out = {}
    for name, shape in table:
        size = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(data, dtype="<f8", count=size, offset=pos).reshape(shape)
        out[name] = arr.astype(np.float64)
        pos += 8 * size
    if pos != len(data):
        raise CheckpointError("trailing bytes after payload")
    return out


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def save(path, arrays: dict, meta: dict | None = None):
    path = Path(path)
    path.write_bytes(dumps(arrays))
    if meta is not None:
        sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load(path):
    """Return ``(arrays, meta)``; ``meta`` is None without a sidecar."""
    path = Path(path)
    arrays = loads(path.read_bytes())
    side = sidecar_path(path)
    meta = json.loads(side.read_text()) if side.exists() else None
    return arrays, meta
