"""
Learned operation scheduling.

An OpPolicy holds an L x O matrix whose rows are per-block categorical distributions over
the operation pool. Every attack iteration draws s distinct operations per block and feeds
the iteration's adversarial loss back as reward: an online, per-iteration realization of
maximizing the expected attack loss over sampled schedules.
"""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from redvit.config.experiment import OpsConfig, PolicyConfig
from redvit.errors import ConfigError, ContractError
from redvit.model.redundancy import BlockMods, OpKind, compose_block_mods, make_op
from redvit.rng import StreamKey

logger = logging.getLogger(__name__)

BASELINE_DECAY = 0.9

OpSets = tuple[tuple[str, ...], ...]


@dataclass(frozen=True)
class OpPolicy:
    matrix: np.ndarray
    pool: tuple[str, ...]
    s: int
    lr: float
    prob_floor: float
    baseline: float = 0.0

    @property
    def num_layers(self) -> int:
        return self.matrix.shape[0]

    def to_dict(self) -> dict:
        return {
            "pool": list(self.pool),
            "matrix": self.matrix.tolist(),
            "s": self.s,
            "lr": self.lr,
            "prob_floor": self.prob_floor,
            "baseline": self.baseline,
        }


def init_policy(
    num_layers: int, pool: Sequence[str], s: int, lr: float, prob_floor: float
) -> OpPolicy:
    pool = tuple(pool)
    size = len(pool)
    if size < 1:
        raise ConfigError("operation pool must not be empty")
    if not 0 <= s <= size:
        raise ConfigError(f"s must lie in [0, {size}], got {s}")
    if prob_floor < 0 or prob_floor * size >= 1:
        raise ConfigError(f"prob_floor {prob_floor} is invalid for a pool of {size} operations")
    return OpPolicy(np.full((num_layers, size), 1.0 / size), pool, s, lr, prob_floor)


def policy_from_config(num_layers: int, config: PolicyConfig) -> OpPolicy:
    return init_policy(num_layers, config.pool, config.s, config.lr, config.prob_floor)


def sample_op_sets(policy: OpPolicy, rng: np.random.Generator) -> OpSets:
    """Per block, s draws without replacement, each over the renormalized remaining mass."""
    sets = []
    for row in policy.matrix:
        remaining = list(range(len(policy.pool)))
        chosen = []
        for _ in range(policy.s):
            mass = row[remaining]
            pick = rng.choice(len(remaining), p=mass / mass.sum())
            chosen.append(policy.pool[remaining.pop(pick)])
        sets.append(tuple(chosen))
    return tuple(sets)


def materialize(sets: OpSets, ops: OpsConfig, key: StreamKey) -> list[BlockMods]:
    """Turn sampled op names into block schedules; each (block, op) gets its own stream."""
    schedule = []
    for block, names in enumerate(sets):
        instances = [make_op(OpKind(name), ops, key.at(block=block, op=name)) for name in names]
        schedule.append(compose_block_mods(instances))
    return schedule


def sample_schedule(
    policy: OpPolicy, rng: np.random.Generator, ops: OpsConfig, key: StreamKey
) -> tuple[OpSets, list[BlockMods]]:
    sets = sample_op_sets(policy, rng)
    return sets, materialize(sets, ops, key)


def project_row(row: np.ndarray, floor: float) -> np.ndarray:
    """Pin entries below the floor to it and rescale the rest to fill the remaining mass."""
    row = np.maximum(row, 0.0)
    pinned = np.zeros(row.shape, dtype=bool)
    while True:
        free = ~pinned
        budget = 1.0 - floor * pinned.sum()
        total = row[free].sum()
        out = np.where(pinned, floor, row * (budget / total) if total > 0 else budget / free.sum())
        newly = free & (out < floor)
        if not newly.any():
            return out
        pinned |= newly


def reinforce_update(policy: OpPolicy, sets: OpSets, reward: float) -> OpPolicy:
    if len(sets) != policy.num_layers:
        raise ContractError(f"expected {policy.num_layers} sampled sets, got {len(sets)}")
    for names in sets:
        for name in names:
            if name not in policy.pool:
                raise ContractError(f"operation '{name}' is not in the policy pool {policy.pool}")
    advantage = reward - policy.baseline
    matrix = policy.matrix
    if advantage != 0:
        matrix = matrix.copy()
        for layer, names in enumerate(sets):
            for name in names:
                o = policy.pool.index(name)
                matrix[layer, o] += policy.lr * advantage / matrix[layer, o]
            matrix[layer] = project_row(matrix[layer], policy.prob_floor)
    baseline = BASELINE_DECAY * policy.baseline + (1 - BASELINE_DECAY) * reward
    logger.debug("policy reward %.6f advantage %.6f (per-iteration expected-loss estimate)", reward, advantage)
    return dataclasses.replace(policy, matrix=matrix, baseline=baseline)
