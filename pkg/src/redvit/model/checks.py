"""
Whole-model gradient checks: loss of the toy ViT against central differences, with respect
to input pixels and to robust tokens, once per block modifier under frozen streams.
"""
from __future__ import annotations

import logging
from typing import Optional

import numpy as np

from redvit.autodiff import tensor as T
from redvit.autodiff.gradcheck import DEFAULT_STEP, finite_diff_check
from redvit.autodiff.tensor import Tensor
from redvit.model.base import cross_entropy
from redvit.model.redundancy import (
    BlockMods, CleanInject, FfnDrop, GhostMoE, HeadDrop, MaskMode, OpInstance, PermuteHeads, SparsifyAttention,
)
from redvit.model.vit import ViTConfig, VisionTransformer, vit_forward
from redvit.rng import StreamKey, stream

logger = logging.getLogger(__name__)

def _modifiers(seed: int) -> dict[str, Optional[OpInstance]]:
    key = StreamKey(seed, op="gradcheck")
    return {
        "none": None,
        "sparsify": SparsifyAttention(key.at(block=1), 0.3),
        "sparsify-neginf": SparsifyAttention(key.at(block=2), 0.3, MaskMode.NEGINF),
        "permute": PermuteHeads(key.at(block=3), 1.0, 1.0),
        "clean": CleanInject(key.at(block=4), 0.3),
        "moe": GhostMoE(key.at(block=5), 3, 0.3),
        "head-drop": HeadDrop(key.at(block=6), 0.25),
        "ffn-drop": FfnDrop(key.at(block=7), 0.3),
    }


def _coordinates(x: np.ndarray, count: int, rng: np.random.Generator) -> list[int]:
    return sorted(rng.choice(x.size, size=min(count, x.size), replace=False).tolist())


def check_model(
    seed: int = 0, pixels: int = 30, robust_count: int = 4, h: float = DEFAULT_STEP, config: Optional[ViTConfig] = None
) -> dict[str, float]:
    """Max relative error per modifier, for image leaves and for robust-token leaves."""
    config = config or ViTConfig()
    model = VisionTransformer.initialize(config, seed)
    rng = stream(seed, op="gradcheck-data")
    image = rng.random((config.image_size, config.image_size, config.channels))
    tokens = rng.normal(0.0, 0.5, size=(robust_count, config.hidden_dim))
    label = int(rng.integers(config.num_classes))
    weights = model.weights()
    clean = model.capture_clean_context(image, tokens)

    results = {}
    for name, op in _modifiers(seed).items():
        block = BlockMods(()) if op is None else BlockMods((op,))
        mods = [block] * config.num_layers

        def image_loss(x: Tensor, mods=mods) -> Tensor:
            logits = vit_forward(x, weights, config, mods, T.constant(tokens), clean)
            return cross_entropy(logits, [label])

        def token_loss(z: Tensor, mods=mods) -> Tensor:
            logits = vit_forward(T.constant(image), weights, config, mods, z, clean)
            return cross_entropy(logits, [label])

        coords = _coordinates(image, pixels, rng)
        results[f"vit/{name}/image"] = finite_diff_check(image_loss, image, h, coords)
        coords = _coordinates(tokens, pixels, rng)
        results[f"vit/{name}/robust-tokens"] = finite_diff_check(token_loss, tokens, h, coords)
        logger.debug("model gradcheck %s: image %.3e tokens %.3e", name,
                     results[f"vit/{name}/image"], results[f"vit/{name}/robust-tokens"])
    return results
