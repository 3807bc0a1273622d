"""
Redundancy probes: accuracy of a trained ViT while a growing fraction of its tokens,
attention weights, heads or FFN hidden units is removed. Every point averages several
seeded mask draws; the CLS token is always kept.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from redvit.config.experiment import PROBE_KINDS, ProbeConfig
from redvit.errors import ConfigError
from redvit.eval.metrics import mean_std
from redvit.model.redundancy import BlockMods, FfnDrop, HeadDrop, MaskMode, SparsifyAttention, ceil_count
from redvit.model.vit import VisionTransformer
from redvit.rng import StreamKey

logger = logging.getLogger(__name__)


@dataclass
class ProbeCurve:
    kind: str
    points: list[tuple[float, float, float]] = field(default_factory=list)

    @property
    def clean_accuracy(self) -> Optional[float]:
        for ratio, acc, _ in self.points:
            if ratio == 0:
                return acc
        return None

    def accuracy_at(self, ratio: float) -> float:
        for r, acc, _ in self.points:
            if np.isclose(r, ratio):
                return acc
        raise KeyError(ratio)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "points": [{"ratio": r, "accuracy": a, "stddev": s} for r, a, s in self.points]}


def _block_mods(kind: str, ratio: float, key: StreamKey, num_layers: int) -> list[BlockMods]:
    mods = []
    for block in range(num_layers):
        stream = key.at(block=block, op=kind)
        if kind == "attn-zero":
            op = SparsifyAttention(stream, ratio, MaskMode.MULTIPLICATIVE)
        elif kind == "head-drop":
            op = HeadDrop(stream, ratio)
        else:
            op = FfnDrop(stream, ratio)
        mods.append(BlockMods((op,)))
    return mods


def _probe_logits(model: VisionTransformer, kind: str, ratio: float, key: StreamKey, images: np.ndarray) -> np.ndarray:
    if kind == "token-drop":
        patches = model.config.num_patches
        dropped = ceil_count(ratio, patches)
        if dropped == 0:
            return model.logits(images)
        keep = np.sort(key.at(op=kind).generator().choice(patches, size=patches - dropped, replace=False))
        return model.logits(images, keep_tokens=keep)
    return model.logits(images, mods=_block_mods(kind, ratio, key, model.config.num_layers))


def redundancy_probe(
    model,
    kind: str,
    ratios: Sequence[float],
    images: np.ndarray,
    labels: np.ndarray,
    seed: int,
    draws: int = 3,
) -> ProbeCurve:
    if kind not in PROBE_KINDS:
        raise ConfigError(f"Unknown probe '{kind}', expected one of {PROBE_KINDS}")
    if not isinstance(model, VisionTransformer):
        raise ConfigError("redundancy probes need a transformer model")
    labels = np.asarray(labels)
    curve = ProbeCurve(kind)
    for i, ratio in enumerate(ratios):
        accs = []
        for draw in range(draws):
            key = StreamKey(seed, image=i, iteration=draw)
            logits = _probe_logits(model, kind, ratio, key, images)
            accs.append(float(np.mean(np.argmax(logits, axis=-1) == labels)))
        acc, std = mean_std(accs)
        curve.points.append((float(ratio), acc, std))
        logger.info("probe %s ratio %.2f accuracy %.4f", kind, ratio, acc)
    return curve


def run_probes(model, config: ProbeConfig, images: np.ndarray, labels: np.ndarray, seed: int) -> dict[str, ProbeCurve]:
    """All configured probes on the same test slice."""
    images, labels = images[:config.count], labels[:config.count]
    return {kind: redundancy_probe(model, kind, config.ratios, images, labels, seed, config.draws) for kind in config.kinds}
