"""Transfer matrices: attack with each surrogate, measure success on every victim."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from redvit.attack.redundant import attack_batch
from redvit.config.experiment import ExperimentConfig
from redvit.errors import ConfigError
from redvit.eval.dataset import Dataset
from redvit.eval.metrics import attack_success_rate, mean_std, row_average
from redvit.eval.zoo import ModelZoo, load_global_tokens

logger = logging.getLogger(__name__)

METHODS = ("mi", "ours")


@dataclass
class TransferReport:
    surrogates: list[str]
    victims: list[str]
    matrix: list[list[float]]
    method: str
    config: dict
    config_hash: str
    seeds: list[int]
    filter: str = "all"
    policies: dict[str, Optional[dict]] = field(default_factory=dict)
    losses: dict[str, list[list[float]]] = field(default_factory=dict)

    @property
    def averages(self) -> list[float]:
        return [row_average(row) if row else 0.0 for row in self.matrix]

    def entry(self, surrogate: str, victim: str) -> float:
        return self.matrix[self.surrogates.index(surrogate)][self.victims.index(victim)]

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "surrogates": self.surrogates,
            "victims": self.victims,
            "matrix": self.matrix,
            "averages": self.averages,
            "filter": self.filter,
            "seeds": self.seeds,
            "config": self.config,
            "config_hash": self.config_hash,
            "policy": self.policies,
            "losses": self.losses,
        }


def attack_slice(dataset: Dataset, config: ExperimentConfig, count: Optional[int] = None) -> tuple[np.ndarray, np.ndarray]:
    images, labels = dataset.split(config.attack.split)
    count = config.attack.count if count is None else count
    return images[:count], labels[:count]


def surrogate_names(config: ExperimentConfig) -> list[str]:
    return list(config.attack.surrogates) or [config.attack.surrogate]


def victim_names(config: ExperimentConfig, zoo: ModelZoo) -> list[str]:
    return list(config.attack.victims) or zoo.names


def evaluate_victims(
    zoo: ModelZoo,
    victims: Sequence[str],
    adv_images: np.ndarray,
    labels: np.ndarray,
    filter: str = "all",  # noqa: A002
    clean_images: Optional[np.ndarray] = None,
) -> list[float]:
    return [attack_success_rate(zoo.get(v), adv_images, labels, filter, clean_images) for v in victims]


def transfer_matrix(
    zoo: ModelZoo,
    images: np.ndarray,
    labels: np.ndarray,
    config: ExperimentConfig,
    surrogates: Optional[Sequence[str]] = None,
    victims: Optional[Sequence[str]] = None,
    method: Optional[str] = None,
) -> TransferReport:
    method = method or config.attack.method
    if method not in METHODS:
        raise ConfigError(f"Unknown attack method '{method}', expected one of {METHODS}")
    surrogates = list(surrogates or surrogate_names(config))
    victims = list(victims or victim_names(config, zoo))
    report = TransferReport(surrogates, victims, [], method, config.to_dict(), config.config_hash(),
                            [config.seed], config.attack.filter)
    for name in surrogates:
        surrogate = zoo.get(name)
        tokens = load_global_tokens(config, name) if method == "ours" else None
        logger.info("attacking %d images with %s (%s)", len(labels), name, method)
        result = attack_batch(images, labels, surrogate, config, method, tokens)
        report.matrix.append(evaluate_victims(zoo, victims, result.x_adv, labels, config.attack.filter, images))
        report.policies[name] = None if result.final_policy is None else result.final_policy.to_dict()
        report.losses[name] = [d["losses"] for d in result.per_image]
    return report


def black_box_mean(report: TransferReport, victim: str) -> Optional[float]:
    """Mean ASR on a victim over the surrogates that are not the victim itself."""
    values = [report.entry(s, victim) for s in report.surrogates if s != victim]
    return float(np.mean(values)) if values else None


def compare_methods(
    zoo: ModelZoo,
    images: np.ndarray,
    labels: np.ndarray,
    config: ExperimentConfig,
    seeds: Sequence[int],
) -> dict:
    """MI-FGSM versus the redundancy attack over several seeds, per black-box victim."""
    surrogates = surrogate_names(config)
    victims = victim_names(config, zoo)
    per_method: dict[str, dict[str, list[float]]] = {m: {v: [] for v in victims} for m in METHODS}
    reports = {m: [] for m in METHODS}
    for seed in seeds:
        seeded = config.with_seed(seed)
        for method in METHODS:
            report = transfer_matrix(zoo, images, labels, seeded, surrogates, victims, method)
            reports[method].append(report.to_dict())
            for v in victims:
                value = black_box_mean(report, v)
                if value is not None:
                    per_method[method][v].append(value)
    summary = {}
    wins = 0
    gains = []
    for v in victims:
        if not per_method["mi"][v]:
            continue
        mi_mean, mi_std = mean_std(per_method["mi"][v])
        ours_mean, ours_std = mean_std(per_method["ours"][v])
        summary[v] = {"mi": {"mean": mi_mean, "std": mi_std}, "ours": {"mean": ours_mean, "std": ours_std}}
        wins += ours_mean > mi_mean
        gains.append(ours_mean - mi_mean)
    return {
        "seeds": list(seeds),
        "surrogates": surrogates,
        "victims": summary,
        "victims_improved": wins,
        "mean_improvement": float(np.mean(gains)) if gains else None,
        "config": config.to_dict(),
        "config_hash": config.config_hash(),
        "runs": reports,
    }
