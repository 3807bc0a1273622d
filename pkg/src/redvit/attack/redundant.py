"""
The full redundancy-enhanced transfer attack.

Per image: optional robust-token pre-training, a clean-context capture, then MI-FGSM where
every iteration runs under a block schedule sampled from the learned operation policy and
feeds its loss back to that policy.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from redvit.attack.mifgsm import mi_fgsm_attack
from redvit.attack.policy import OpPolicy, OpSets, policy_from_config, reinforce_update, sample_schedule
from redvit.attack.robust import RobustTokens, robustify_dynamic
from redvit.config.experiment import ExperimentConfig
from redvit.errors import ConfigError
from redvit.model.tokens import AttackContext, CleanContext
from redvit.model.vit import VisionTransformer
from redvit.rng import StreamKey, stream

logger = logging.getLogger(__name__)


@dataclass
class RedundantAttackResult:
    x_adv: np.ndarray
    policy: OpPolicy
    losses: list[float] = field(default_factory=list)
    schedules: list[OpSets] = field(default_factory=list)
    robust: Optional[RobustTokens] = None

    def diagnostics(self) -> dict:
        return {
            "losses": list(self.losses),
            "schedules": [[list(ops) for ops in sets] for sets in self.schedules],
            "robust_tokens": None if self.robust is None else self.robust.to_dict(),
        }


class _PolicyScheduler:
    """Samples one schedule per iteration and learns from the loss it produced."""

    def __init__(self, policy: OpPolicy, config: ExperimentConfig, image: int, context: AttackContext):
        self.policy = policy
        self.config = config
        self.image = image
        self.context = context
        self.losses: list[float] = []
        self.schedules: list[OpSets] = []

    def provide(self, iteration: int) -> AttackContext:
        seed = self.config.seed
        rng = stream(seed, image=self.image, iteration=iteration, op="policy")
        key = StreamKey(seed, image=self.image, iteration=iteration)
        sets, mods = sample_schedule(self.policy, rng, self.config.ops, key)
        self.schedules.append(sets)
        logger.debug("image %d iteration %d schedule %s", self.image, iteration, sets)
        return AttackContext(mods, self.context.robust_tokens, self.context.clean)

    def observe(self, iteration: int, loss: float):
        self.losses.append(loss)
        if self.config.policy.learn:
            self.policy = reinforce_update(self.policy, self.schedules[iteration], loss)


def prepare_robust_tokens(
    x: np.ndarray,
    y: int,
    surrogate: VisionTransformer,
    config: ExperimentConfig,
    image: int,
    global_tokens: Optional[RobustTokens],
) -> Optional[RobustTokens]:
    robust = config.robust
    if robust.count == 0:
        return None
    if global_tokens is not None:
        return global_tokens
    if robust.mode == "global":
        raise ConfigError("robust.mode is 'global' but no trained tokens were loaded; run 'robustify' first")
    return robustify_dynamic(x, y, surrogate, robust, config.attack, config.seed, image)


def run_redundant_attack(
    x: np.ndarray,
    y: int,
    surrogate,
    config: ExperimentConfig,
    image: int = 0,
    global_tokens: Optional[RobustTokens] = None,
) -> RedundantAttackResult:
    if not isinstance(surrogate, VisionTransformer):
        raise ConfigError(f"the redundancy attack needs a transformer surrogate, got a '{surrogate.kind}' model")
    x = np.asarray(x, dtype=np.float64)
    tokens = prepare_robust_tokens(x, y, surrogate, config, image, global_tokens)
    token_array = None if tokens is None else tokens.tokens
    clean: CleanContext = surrogate.capture_clean_context(x, token_array)
    policy = policy_from_config(surrogate.config.num_layers, config.policy)
    scheduler = _PolicyScheduler(policy, config, image, AttackContext(robust_tokens=token_array, clean=clean))
    x_adv = mi_fgsm_attack(x, y, surrogate, config.attack, mods_provider=scheduler.provide, on_step=scheduler.observe)
    return RedundantAttackResult(x_adv, scheduler.policy, scheduler.losses, scheduler.schedules, tokens)


@dataclass
class BatchAttackResult:
    x_adv: np.ndarray
    labels: np.ndarray
    method: str
    per_image: list[dict] = field(default_factory=list)
    final_policy: Optional[OpPolicy] = None


def attack_batch(
    images: np.ndarray,
    labels: np.ndarray,
    surrogate,
    config: ExperimentConfig,
    method: Optional[str] = None,
    global_tokens: Optional[RobustTokens] = None,
) -> BatchAttackResult:
    """Attack every image independently; image i draws from streams keyed by i."""
    method = method or config.attack.method
    out = np.empty_like(np.asarray(images, dtype=np.float64))
    result = BatchAttackResult(out, np.asarray(labels, dtype=np.int64), method)
    for i, (x, y) in enumerate(zip(images, labels)):
        if method == "mi":
            losses: list[float] = []
            out[i] = mi_fgsm_attack(x, int(y), surrogate, config.attack, on_step=lambda _, loss: losses.append(loss))
            result.per_image.append({"losses": losses})
        else:
            attacked = run_redundant_attack(x, int(y), surrogate, config, image=i, global_tokens=global_tokens)
            out[i] = attacked.x_adv
            result.per_image.append(attacked.diagnostics())
            result.final_policy = attacked.policy
        if (i + 1) % 10 == 0 or i + 1 == len(images):
            logger.info("attacked %d/%d images (%s)", i + 1, len(images), method)
    return result
