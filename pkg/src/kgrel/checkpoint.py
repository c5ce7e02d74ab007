"""Binary checkpoint container.

Layout, all integers little-endian::

    b"KGRL"                      magic
    uint32                       format version
    uint64                       metadata length in bytes
    bytes                        metadata, UTF-8 JSON
    per tensor, in the order listed under metadata["tensors"]:
        uint32 + bytes           name (UTF-8)
        uint32 + uint64 * rank   shape
        float64 * prod(shape)    row-major payload
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from .models import ModelParams

MAGIC = b"KGRL"
VERSION = 1


class CheckpointError(ValueError):
    pass


def encode_metadata(metadata: dict) -> bytes:
    return json.dumps(metadata, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_checkpoint(params: ModelParams, metadata: dict, path: str | os.PathLike) -> None:
    """Write ``params`` with ``metadata`` (JSON-serialisable) to ``path``.

    The model kind and tensor list are recorded in the metadata.
    """
    tensors = params.tensors()
    meta = dict(metadata)
    meta["model"] = params.kind.value
    meta["tensors"] = list(tensors)
    meta_bytes = encode_metadata(meta)
    chunks = [MAGIC, struct.pack("<IQ", VERSION, len(meta_bytes)), meta_bytes]
    for name, arr in tensors.items():
        name_bytes = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(name_bytes)) + name_bytes)
        chunks.append(struct.pack(f"<I{arr.ndim}Q", arr.ndim, *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    try:
        Path(path).write_bytes(b"".join(chunks))
    except OSError as exc:
        raise CheckpointError(f"cannot write checkpoint {path}: {exc}") from exc


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"{self.path}: truncated while reading {what}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def load_checkpoint(path: str | os.PathLike) -> tuple[ModelParams, dict]:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    reader = _Reader(data, path)
    if reader.take(4, "magic") != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    version, meta_len = reader.unpack("<IQ", "header")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    try:
        metadata = json.loads(reader.take(meta_len, "metadata").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt metadata: {exc}") from exc

    blocks = {}
    for expected in metadata.get("tensors", []):
        what = f"tensor {expected!r}"
        (name_len,) = reader.unpack("<I", what)
        name = reader.take(name_len, what).decode("utf-8")
        if name != expected:
            raise CheckpointError(f"{path}: expected tensor {expected!r}, found {name!r}")
        (rank,) = reader.unpack("<I", what)
        shape = reader.unpack(f"<{rank}Q", what)
        count = int(np.prod(shape, dtype=np.int64))
        payload = reader.take(8 * count, what)
        blocks[name] = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(shape)
    if reader.pos != len(data):
        raise CheckpointError(f"{path}: {len(data) - reader.pos} trailing bytes")
    try:
        params = ModelParams(metadata["model"], **blocks)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: inconsistent tensors: {exc}") from exc
    return params, metadata
