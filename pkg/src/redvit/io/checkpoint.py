"""
Checkpoint container (.rvit).

Layout: magic b"RVIT", u32 format version, u64 manifest length, canonical JSON manifest,
payload. All integers are little-endian. The manifest lists every tensor as
{name, shape, offset, nbytes} with offsets relative to the payload start; payload arrays are
little-endian float64 in manifest order. An optional "robust_tokens" section describes a
stored set of robust tokens the same way.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from redvit.attack.robust import RobustTokens
from redvit.errors import (
    CheckpointCorruptionError, CheckpointFormatError, CheckpointVersionError, ReportIOError,
)

MAGIC = b"RVIT"
FORMAT_VERSION = 1
PREAMBLE = struct.Struct("<4sIQ")
DTYPE = np.dtype("<f8")


@dataclass
class Checkpoint:
    parameters: dict[str, np.ndarray]
    metadata: dict[str, Any] = field(default_factory=dict)
    robust_tokens: Optional[RobustTokens] = None


def _canonical(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def encode_checkpoint(checkpoint: Checkpoint) -> bytes:
    entries, chunks, offset = [], [], 0
    for name, value in checkpoint.parameters.items():
        data = np.ascontiguousarray(value, dtype=DTYPE).tobytes()
        entries.append({"name": name, "shape": list(np.shape(value)), "offset": offset, "nbytes": len(data)})
        chunks.append(data)
        offset += len(data)
    robust = None
    if checkpoint.robust_tokens is not None:
        tokens = checkpoint.robust_tokens
        data = np.ascontiguousarray(tokens.tokens, dtype=DTYPE).tobytes()
        robust = {"shape": list(tokens.tokens.shape), "offset": offset, "nbytes": len(data),
                  "mode": tokens.mode, "meta": tokens.meta}
        chunks.append(data)
    manifest = _canonical({"tensors": entries, "robust_tokens": robust, "metadata": checkpoint.metadata})
    return PREAMBLE.pack(MAGIC, FORMAT_VERSION, len(manifest)) + manifest + b"".join(chunks)


def save_checkpoint(checkpoint: Checkpoint, path: str | Path):
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_bytes(encode_checkpoint(checkpoint))
    except OSError as e:
        raise ReportIOError(str(path), e) from e


def _read_tensor(payload: bytes, entry: dict, name: str) -> np.ndarray:
    shape = tuple(entry["shape"])
    offset, nbytes = entry["offset"], entry["nbytes"]
    expected = int(np.prod(shape, dtype=np.int64)) * DTYPE.itemsize
    if nbytes != expected:
        raise CheckpointCorruptionError(name, f"{nbytes} bytes listed for shape {list(shape)}")
    if offset < 0 or offset + nbytes > len(payload):
        raise CheckpointCorruptionError(name, "payload is truncated")
    return np.frombuffer(payload, dtype=DTYPE, count=nbytes // DTYPE.itemsize, offset=offset).reshape(shape).copy()


def _check_layout(entries: list[tuple[str, dict]]) -> int:
    end = 0
    for name, entry in sorted(entries, key=lambda item: item[1]["offset"]):
        if entry["offset"] < end:
            raise CheckpointCorruptionError(name, "tensor overlaps the previous one")
        end = entry["offset"] + entry["nbytes"]
    return end


def decode_checkpoint(raw: bytes) -> Checkpoint:
    if len(raw) < PREAMBLE.size:
        raise CheckpointFormatError("file is too short to be a checkpoint")
    magic, version, length = PREAMBLE.unpack_from(raw)
    if magic != MAGIC:
        raise CheckpointFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version > FORMAT_VERSION:
        raise CheckpointVersionError(version, FORMAT_VERSION)
    start = PREAMBLE.size
    if start + length > len(raw):
        raise CheckpointFormatError("manifest extends past the end of the file")
    try:
        manifest = json.loads(raw[start:start + length].decode("utf-8"))
        tensors = manifest["tensors"]
        robust = manifest.get("robust_tokens")
        metadata = manifest.get("metadata", {})
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as e:
        raise CheckpointFormatError(f"unreadable manifest: {e}") from e
    payload = raw[start + length:]
    entries = [(t["name"], t) for t in tensors]
    if robust is not None:
        entries.append(("robust_tokens", robust))
    end = _check_layout(entries)
    parameters = {t["name"]: _read_tensor(payload, t, t["name"]) for t in tensors}
    tokens = None
    if robust is not None:
        tokens = RobustTokens(_read_tensor(payload, robust, "robust_tokens"), robust.get("mode", "global"),
                              robust.get("meta", {}))
    if len(payload) > end:
        raise CheckpointFormatError(f"{len(payload) - end} trailing bytes after the declared payload")
    return Checkpoint(parameters, metadata, tokens)


def load_checkpoint(path: str | Path) -> Checkpoint:
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise CheckpointFormatError(f"Cannot read checkpoint '{path}': {e}") from e
    return decode_checkpoint(raw)
