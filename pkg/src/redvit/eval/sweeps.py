"""
Parameter sweeps for single redundancy operations and for the robust-token count.

An operation sweep pins the schedule to one operation in every block (a one-entry pool
without learning) and varies that operation's parameters; the robust sweep varies N_r with
no operations active. Each grid point records the black-box success rate averaged over
victims, as mean and standard deviation over seeds.
"""
from __future__ import annotations

import dataclasses
import logging
from typing import Optional, Sequence

import numpy as np

from redvit.attack.redundant import attack_batch
from redvit.attack.robust import RobustTokens, robustify_global
from redvit.config.experiment import ExperimentConfig, PolicyConfig
from redvit.errors import ConfigError
from redvit.eval.dataset import Dataset
from redvit.eval.metrics import mean_std
from redvit.eval.transfer import evaluate_victims, surrogate_names, victim_names
from redvit.eval.zoo import ModelZoo

logger = logging.getLogger(__name__)

DEFAULT_GRIDS: dict[str, tuple[tuple[float, ...], ...]] = {
    "sparsify": tuple((r / 10,) for r in range(10)),
    "permute": tuple((p, r) for p in (0.1, 0.3, 0.5) for r in (0.25, 0.5, 1.0)),
    "clean": tuple((r / 10,) for r in range(7)),
    "moe": tuple((float(e), d / 10) for e in range(1, 6) for d in range(1, 6)),
    "robust": ((0.0,), (1.0,), (4.0,), (16.0,), (64.0,)),
}

PARAM_NAMES = {"sparsify": ("r",), "permute": ("p", "r"), "clean": ("r",), "moe": ("E", "d"), "robust": ("count",)}


def _replace(obj, **changes):
    return dataclasses.replace(obj, **changes)


def apply_point(config: ExperimentConfig, kind: str, point: Sequence[float]) -> ExperimentConfig:
    """Config for one grid point: the swept operation alone, or robust tokens alone."""
    if len(point) != len(PARAM_NAMES[kind]):
        raise ConfigError(f"sweep point {list(point)} does not match {kind} parameters {PARAM_NAMES[kind]}")
    ops = config.ops
    robust = _replace(config.robust, count=0)
    pool = (kind,)
    if kind == "sparsify":
        ops = _replace(ops, sparsify=_replace(ops.sparsify, r=point[0]))
    elif kind == "permute":
        ops = _replace(ops, permute=_replace(ops.permute, p=point[0], r=point[1]))
    elif kind == "clean":
        ops = _replace(ops, clean=_replace(ops.clean, r=point[0]))
    elif kind == "moe":
        ops = _replace(ops, moe=_replace(ops.moe, experts=int(round(point[0])), drop=point[1]))
    else:
        robust = _replace(config.robust, count=int(round(point[0])))
        pool = ("identity",)
    policy = PolicyConfig(s=1, lr=config.policy.lr, prob_floor=config.policy.prob_floor, learn=False, pool=pool)
    attack = _replace(config.attack, method="ours")
    return _replace(config, ops=ops, robust=robust, policy=policy, attack=attack)


def black_box_rate(
    zoo: ModelZoo,
    images: np.ndarray,
    labels: np.ndarray,
    config: ExperimentConfig,
    surrogate: str,
    victims: Sequence[str],
    tokens: Optional[RobustTokens] = None,
) -> float:
    targets = [v for v in victims if v != surrogate]
    if not targets:
        raise ConfigError("a sweep needs at least one victim other than the surrogate")
    result = attack_batch(images, labels, zoo.get(surrogate), config, "ours", tokens)
    return float(np.mean(evaluate_victims(zoo, targets, result.x_adv, labels, config.attack.filter, images)))


def run_sweep(zoo: ModelZoo, dataset: Dataset, images: np.ndarray, labels: np.ndarray, config: ExperimentConfig) -> dict:
    sweep = config.sweep
    grid = sweep.grid or DEFAULT_GRIDS[sweep.kind]
    surrogate = surrogate_names(config)[0]
    victims = victim_names(config, zoo)
    images, labels = images[:sweep.count], labels[:sweep.count]
    seeds = [config.seed + k for k in range(sweep.seeds)]
    global_mode = sweep.kind == "robust" and config.robust.mode == "global"
    points = []
    for point in grid:
        point_config = apply_point(config, sweep.kind, point)
        if global_mode:
            point_config = _replace(point_config, robust=_replace(point_config.robust, mode="global"))
        rates = []
        for seed in seeds:
            seeded = point_config.with_seed(seed)
            tokens = _global_tokens(zoo, dataset, seeded, surrogate) if global_mode else None
            rates.append(black_box_rate(zoo, images, labels, seeded, surrogate, victims, tokens))
        mean, std = mean_std(rates)
        points.append({"params": dict(zip(PARAM_NAMES[sweep.kind], point)), "mean": mean, "std": std, "rates": rates})
        logger.info("sweep %s %s mean black-box ASR %.4f", sweep.kind, list(point), mean)
    return {
        "kind": sweep.kind,
        "surrogate": surrogate,
        "victims": [v for v in victims if v != surrogate],
        "seeds": seeds,
        "points": points,
        "config": config.to_dict(),
        "config_hash": config.config_hash(),
    }


def _global_tokens(zoo: ModelZoo, dataset: Dataset, config: ExperimentConfig, surrogate: str) -> Optional[RobustTokens]:
    if config.robust.count == 0:
        return None
    images, labels = dataset.split("train")
    count = config.robust.calibration
    return robustify_global(images[:count], labels[:count], zoo.get(surrogate), config.robust, config.attack, config.seed)


def sweep_points(report: dict) -> list[tuple[float, ...]]:
    """Flatten a sweep report into CSV rows: parameters, mean, std."""
    return [tuple(p["params"].values()) + (p["mean"], p["std"]) for p in report["points"]]
