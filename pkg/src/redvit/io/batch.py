"""
Image batch container (.advb): u32 header length, canonical JSON header, count*H*W*C
float64 pixels, count int64 labels, everything little-endian.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from redvit.errors import InputError, ReportIOError

HEADER_LENGTH = struct.Struct("<I")
PIXEL_DTYPE = np.dtype("<f8")
LABEL_DTYPE = np.dtype("<i8")


@dataclass(frozen=True)
class ImageBatch:
    images: np.ndarray
    labels: np.ndarray
    epsilon: float
    seed: int
    config_hash: str

    def header(self) -> dict:
        count, height, width, channels = self.images.shape
        return {
            "count": count, "height": height, "width": width, "channels": channels,
            "epsilon": self.epsilon, "seed": self.seed, "config_hash": self.config_hash,
            "labels_dtype": LABEL_DTYPE.str,
        }


def encode_batch(batch: ImageBatch) -> bytes:
    if batch.images.ndim != 4 or len(batch.images) != len(batch.labels):
        raise InputError(f"image batch of shape {batch.images.shape} does not match {len(batch.labels)} labels")
    header = json.dumps(batch.header(), sort_keys=True, separators=(",", ":")).encode("utf-8")
    pixels = np.ascontiguousarray(batch.images, dtype=PIXEL_DTYPE).tobytes()
    labels = np.ascontiguousarray(batch.labels, dtype=LABEL_DTYPE).tobytes()
    return HEADER_LENGTH.pack(len(header)) + header + pixels + labels


def decode_batch(raw: bytes) -> ImageBatch:
    if len(raw) < HEADER_LENGTH.size:
        raise InputError("file is too short to be an image batch")
    (length,) = HEADER_LENGTH.unpack_from(raw)
    start = HEADER_LENGTH.size + length
    try:
        header = json.loads(raw[HEADER_LENGTH.size:start].decode("utf-8"))
        count, height, width, channels = (int(header[k]) for k in ("count", "height", "width", "channels"))
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise InputError(f"unreadable image batch header: {e}") from e
    pixel_count = count * height * width * channels
    expected = start + pixel_count * PIXEL_DTYPE.itemsize + count * LABEL_DTYPE.itemsize
    if len(raw) != expected:
        raise InputError(f"image batch holds {len(raw)} bytes, header implies {expected}")
    images = np.frombuffer(raw, dtype=PIXEL_DTYPE, count=pixel_count, offset=start)
    labels = np.frombuffer(raw, dtype=LABEL_DTYPE, count=count, offset=start + pixel_count * PIXEL_DTYPE.itemsize)
    return ImageBatch(
        images.reshape(count, height, width, channels).copy(), labels.copy(),
        float(header.get("epsilon", 0.0)), int(header.get("seed", 0)), str(header.get("config_hash", "")),
    )


def save_batch(batch: ImageBatch, path: str | Path):
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_bytes(encode_batch(batch))
    except OSError as e:
        raise ReportIOError(str(path), e) from e


def load_batch(path: str | Path) -> ImageBatch:
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise InputError(f"Cannot read image batch '{path}': {e}") from e
    return decode_batch(raw)
