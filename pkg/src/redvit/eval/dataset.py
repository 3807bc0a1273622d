"""
Datasets.

The default source is a procedural ten-class shapes set rendered at 32x32x3. Each image has
its own random stream keyed by its index, so any prefix or single image can be regenerated
on its own. A loader for 3073-byte record files (one label byte, then 32x32 pixels stored as
three channel planes) is available as a real-image alternative.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from redvit.config.experiment import DatasetConfig
from redvit.errors import InputError
from redvit.rng import stream

logger = logging.getLogger(__name__)

IMAGE_SIZE = 32
CHANNELS = 3
NUM_CLASSES = 10
NOISE_SIGMA = 0.05
MIN_CONTRAST = 0.3
RECORD_BYTES = 1 + IMAGE_SIZE * IMAGE_SIZE * CHANNELS

SHAPE_NAMES = (
    "circle", "square", "triangle", "cross", "ring", "h-bar", "v-bar", "diamond", "checker", "dot-grid",
)


@dataclass(frozen=True)
class Dataset:
    images: np.ndarray
    labels: np.ndarray
    seed: int
    train_fraction: float = 0.8
    val_fraction: float = 0.1
    source: str = "shapes"

    def __len__(self) -> int:
        return len(self.labels)

    def bounds(self) -> dict[str, tuple[int, int]]:
        n = len(self)
        train_end = int(round(self.train_fraction * n))
        val_end = train_end + int(round(self.val_fraction * n))
        return {"train": (0, train_end), "val": (train_end, val_end), "test": (val_end, n)}

    def split(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        bounds = self.bounds()
        if name not in bounds:
            raise InputError(f"Unknown split '{name}', expected one of {sorted(bounds)}")
        start, stop = bounds[name]
        return self.images[start:stop], self.labels[start:stop]

    def describe(self) -> dict:
        return {
            "source": self.source,
            "seed": self.seed,
            "count": len(self),
            "splits": {k: stop - start for k, (start, stop) in self.bounds().items()},
            "per_class": np.bincount(self.labels, minlength=NUM_CLASSES).tolist(),
        }


def _shape_mask(label: int, dx: np.ndarray, dy: np.ndarray, s: float) -> np.ndarray:
    r = np.hypot(dx, dy)
    box = np.maximum(np.abs(dx), np.abs(dy))
    name = SHAPE_NAMES[label]
    if name == "circle":
        return r <= s
    if name == "square":
        return box <= 0.85 * s
    if name == "triangle":
        return (dy >= -s) & (dy <= s) & (np.abs(dx) <= (dy + s) / 2)
    if name == "cross":
        return ((np.abs(dx) <= 0.3 * s) & (np.abs(dy) <= s)) | ((np.abs(dy) <= 0.3 * s) & (np.abs(dx) <= s))
    if name == "ring":
        return (r >= 0.6 * s) & (r <= s)
    if name == "h-bar":
        return (np.abs(dy) <= 0.3 * s) & (np.abs(dx) <= 1.2 * s)
    if name == "v-bar":
        return (np.abs(dx) <= 0.3 * s) & (np.abs(dy) <= 1.2 * s)
    if name == "diamond":
        return np.abs(dx) + np.abs(dy) <= s
    if name == "checker":
        cell = s / 2
        parity = (np.floor(dx / cell) + np.floor(dy / cell)) % 2 == 0
        return (box <= s) & parity
    # dot-grid: 3x3 dots
    spacing = 0.7 * s
    near_x = np.abs(dx - spacing * np.clip(np.round(dx / spacing), -1, 1))
    near_y = np.abs(dy - spacing * np.clip(np.round(dy / spacing), -1, 1))
    return np.hypot(near_x, near_y) <= 0.22 * s


def _colors(rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    while True:
        fg, bg = rng.random(CHANNELS), rng.random(CHANNELS)
        if np.max(np.abs(fg - bg)) >= MIN_CONTRAST:
            return fg, bg


def render_shape(label: int, seed: int, index: int) -> np.ndarray:
    rng = stream(seed, image=index, op="shapes")
    cx, cy = IMAGE_SIZE / 2 + rng.uniform(-4.0, 4.0, size=2)
    scale = rng.uniform(7.0, 11.0)
    fg, bg = _colors(rng)
    yy, xx = np.mgrid[0:IMAGE_SIZE, 0:IMAGE_SIZE] + 0.5
    mask = _shape_mask(label, xx - cx, yy - cy, scale)
    image = np.where(mask[..., None], fg, bg)
    image = image + rng.normal(0.0, NOISE_SIGMA, size=image.shape)
    return np.clip(image, 0.0, 1.0)


def generate_shapes_dataset(n: int, seed: int, train: float = 0.8, val: float = 0.1) -> Dataset:
    if n <= 0 or n % NUM_CLASSES:
        raise InputError(f"dataset size must be a positive multiple of {NUM_CLASSES}, got {n}")
    labels = stream(seed, op="shapes-labels").permutation(np.arange(n) % NUM_CLASSES).astype(np.int64)
    images = np.stack([render_shape(int(label), seed, i) for i, label in enumerate(labels)])
    logger.info("generated %d shape images (seed %d)", n, seed)
    return Dataset(images, labels, seed, train, val)


def load_record_file(path: str | Path, seed: int = 0, train: float = 0.8, val: float = 0.1) -> Dataset:
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise InputError(f"Cannot read record file '{path}': {e}") from e
    if not raw or len(raw) % RECORD_BYTES:
        raise InputError(f"record file '{path}' is not a whole number of {RECORD_BYTES}-byte records")
    records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, RECORD_BYTES)
    labels = records[:, 0].astype(np.int64)
    if labels.max() >= NUM_CLASSES:
        raise InputError(f"record file '{path}' has labels outside [0, {NUM_CLASSES})")
    planes = records[:, 1:].reshape(-1, CHANNELS, IMAGE_SIZE, IMAGE_SIZE)
    images = planes.transpose(0, 2, 3, 1).astype(np.float64) / 255.0
    logger.info("loaded %d records from %s", len(labels), path)
    return Dataset(images, labels, seed, train, val, source="records")


def load_dataset(config: DatasetConfig) -> Dataset:
    if config.source == "records":
        return load_record_file(config.path, config.seed, config.train, config.val)
    return generate_shapes_dataset(config.n, config.seed, config.train, config.val)
