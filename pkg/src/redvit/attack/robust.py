"""
Robust-token pre-training.

N_r extra tokens are appended after the patch tokens and trained with a min-max game: an
inner MI-FGSM run finds a perturbation against the model carrying the current tokens, then
one gradient-descent step moves the tokens to reduce the loss on that perturbation. Model
weights are never touched.
"""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np

from redvit.attack.mifgsm import mi_fgsm_attack
from redvit.config.experiment import AttackSettings, RobustConfig
from redvit.errors import ConfigError, InputError, NumericError
from redvit.model.tokens import AttackContext, append_robust_tokens
from redvit.model.vit import VisionTransformer
from redvit.rng import stream

__all__ = [
    "RobustTokens", "append_robust_tokens", "init_tokens", "robustify_dynamic", "robustify_global",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RobustTokens:
    tokens: np.ndarray
    mode: str
    meta: dict = field(default_factory=dict)

    @property
    def count(self) -> int:
        return self.tokens.shape[0]

    def to_dict(self) -> dict:
        return {"count": self.count, "mode": self.mode, "meta": dict(self.meta)}


def _require_vit(model) -> VisionTransformer:
    if not isinstance(model, VisionTransformer):
        raise ConfigError(f"robust tokens need a transformer surrogate, got a '{model.kind}' model")
    return model


def init_tokens(count: int, dim: int, scale: float, seed: int, image: int = 0) -> np.ndarray:
    return stream(seed, image=image, op="robust-init").normal(0.0, scale, size=(count, dim))


def _inner_settings(attack: AttackSettings, robust: RobustConfig) -> AttackSettings:
    return dataclasses.replace(attack, steps=robust.inner_steps)


def _outer_gradient(model: VisionTransformer, x, y, tokens, inner: AttackSettings) -> tuple[float, np.ndarray]:
    context = AttackContext(robust_tokens=tokens)
    x_adv = mi_fgsm_attack(x, y, model, inner, mods_provider=lambda _: context)
    loss, grad = model.token_gradient(x_adv, y, tokens)
    if not np.all(np.isfinite(grad)):
        raise NumericError("non-finite robust-token gradient")
    return loss, grad


def _meta(robust: RobustConfig, seed: int, rounds: int, **extra) -> dict:
    return {"rounds": rounds, "lr": robust.lr, "init_scale": robust.init_scale,
            "inner_steps": robust.inner_steps, "seed": seed, **extra}


def robustify_dynamic(
    x: np.ndarray,
    y: int,
    model,
    robust: RobustConfig,
    attack: AttackSettings,
    seed: int,
    image: int = 0,
) -> RobustTokens:
    """Per-instance tokens: outer_steps rounds of inner attack plus one descent step."""
    model = _require_vit(model)
    tokens = init_tokens(robust.count, model.config.hidden_dim, robust.init_scale, seed, image)
    meta = _meta(robust, seed, robust.outer_steps, image=image)
    if robust.count == 0:
        return RobustTokens(tokens, "dynamic", meta)
    inner = _inner_settings(attack, robust)
    for j in range(robust.outer_steps):
        loss, grad = _outer_gradient(model, x, y, tokens, inner)
        tokens = tokens - robust.lr * grad
        logger.debug("robust round %d loss %.6f", j, loss)
    return RobustTokens(tokens, "dynamic", meta)


def robustify_global(
    images: np.ndarray,
    labels: np.ndarray,
    model,
    robust: RobustConfig,
    attack: AttackSettings,
    seed: int,
) -> RobustTokens:
    """Universal tokens: the outer step averages the token gradient over a calibration batch."""
    model = _require_vit(model)
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if len(images) == 0:
        raise InputError("robust-token calibration set is empty")
    if len(images) != len(labels):
        raise InputError(f"{len(images)} calibration images but {len(labels)} labels")
    tokens = init_tokens(robust.count, model.config.hidden_dim, robust.init_scale, seed)
    meta = _meta(robust, seed, robust.epochs, calibration=len(images), batch_size=robust.batch_size)
    if robust.count == 0:
        return RobustTokens(tokens, "global", meta)
    inner = _inner_settings(attack, robust)
    for epoch in range(robust.epochs):
        losses = []
        for start in range(0, len(images), robust.batch_size):
            results = [
                _outer_gradient(model, images[i], int(labels[i]), tokens, inner)
                for i in range(start, min(start + robust.batch_size, len(images)))
            ]
            losses.extend(loss for loss, _ in results)
            tokens = tokens - robust.lr * np.mean(np.stack([g for _, g in results]), axis=0)
        logger.info("robust tokens epoch %d mean loss %.4f", epoch, float(np.mean(losses)))
    return RobustTokens(tokens, "global", meta)
