"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"SFCK" | u32 version
    u32 n_meta, then n_meta x (u32 len, utf-8 key, u32 len, utf-8 JSON value)
    u32 n_arrays, then n_arrays x (u32 len, utf-8 name, u32 rank,
                                   rank x u64 dim, float32 payload)
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .tape import Tensor

MAGIC = b"SFCK"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class ModelCheckpoint:
    arrays: dict[str, np.ndarray] = field(default_factory=dict)
    metadata: dict[str, Any] = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    @classmethod
    def from_tensors(cls, tensors: Mapping[str, Tensor], metadata=None) -> "ModelCheckpoint":
        arrays = {k: np.asarray(t.data, dtype="<f4") for k, t in tensors.items()}
        return cls(arrays, dict(metadata or {}))

    def with_prefix(self, prefix: str) -> dict[str, np.ndarray]:
        return {k[len(prefix):]: v for k, v in self.arrays.items() if k.startswith(prefix)}


def _put_str(buf: io.BytesIO, s: str) -> None:
    raw = s.encode("utf-8")
    buf.write(struct.pack("<I", len(raw)))
    buf.write(raw)


def to_bytes(ckpt: ModelCheckpoint) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", ckpt.format_version))
    buf.write(struct.pack("<I", len(ckpt.metadata)))
    for key in sorted(ckpt.metadata):
        _put_str(buf, key)
        _put_str(buf, json.dumps(ckpt.metadata[key], sort_keys=True))
    buf.write(struct.pack("<I", len(ckpt.arrays)))
    for name, arr in ckpt.arrays.items():
        arr = np.ascontiguousarray(arr, dtype="<f4")
        _put_str(buf, name)
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(arr.tobytes())
    return buf.getvalue()


class _Reader:
    def __init__(self, raw: bytes):
        self.raw = raw
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise CheckpointError("truncated checkpoint")
        out = self.raw[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def string(self) -> str:
        return self.take(self.u32()).decode("utf-8")


def from_bytes(raw: bytes) -> ModelCheckpoint:
    r = _Reader(raw)
    if r.take(4) != MAGIC:
        raise CheckpointError("bad magic: not a checkpoint file")
    version = r.u32()
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    meta = {}
    for _ in range(r.u32()):
        key = r.string()
        meta[key] = json.loads(r.string())
    arrays = {}
    for _ in range(r.u32()):
        name = r.string()
        rank = r.u32()
        dims = struct.unpack(f"<{rank}Q", r.take(8 * rank))
        count = int(np.prod(dims, dtype=np.int64))
        arrays[name] = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(dims).copy()
    if r.pos != len(raw):
        raise CheckpointError("trailing bytes after checkpoint payload")
    return ModelCheckpoint(arrays, meta, version)


def save_checkpoint(ckpt: ModelCheckpoint, path) -> str:
    """Write ``ckpt`` and return the sha256 hex digest of the file contents."""
    raw = to_bytes(ckpt)
    Path(path).write_bytes(raw)
    return hashlib.sha256(raw).hexdigest()


def load_checkpoint(path) -> ModelCheckpoint:
    return from_bytes(Path(path).read_bytes())


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
