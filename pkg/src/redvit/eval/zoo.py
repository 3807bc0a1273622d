"""
Model zoo: building, training, persisting and admitting surrogate/victim models.

Every model must reach the configured clean test accuracy before it may serve as a
surrogate or a victim.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from redvit.attack.robust import RobustTokens
from redvit.config.experiment import ExperimentConfig, ModelSpec, ZooConfig
from redvit.errors import ConfigError, ZooAdmissionError
from redvit.eval.dataset import NUM_CLASSES, Dataset
from redvit.eval.train import train_model
from redvit.io.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from redvit.io.report import write_json
from redvit.model.cnn import ConvConfig, ConvNet
from redvit.model.vit import ViTConfig, VisionTransformer

logger = logging.getLogger(__name__)

CHECKPOINT_SUFFIX = ".rvit"
ZOO_REPORT = "zoo.json"


def build_model(spec: ModelSpec, num_classes: int = NUM_CLASSES):
    if spec.kind == "vit":
        return VisionTransformer.initialize(ViTConfig.from_spec(spec, num_classes), spec.seed)
    return ConvNet.initialize(ConvConfig.from_spec(spec, num_classes), spec.seed)


def model_from_description(description: dict, parameters: dict):
    kind = description.get("kind")
    config = dict(description.get("config", {}))
    if kind == "vit":
        return VisionTransformer(ViTConfig(**config), parameters)
    if kind == "cnn":
        config["widths"] = tuple(config.get("widths", ()))
        return ConvNet(ConvConfig(**config), parameters)
    raise ConfigError(f"checkpoint describes an unknown model kind '{kind}'")


@dataclass
class ZooEntry:
    name: str
    model: object
    accuracy: float
    path: Optional[Path] = None

    def admitted(self, required: float) -> bool:
        return self.accuracy >= required

    def to_dict(self, required: float) -> dict:
        return {
            "name": self.name,
            "kind": self.model.kind,
            "accuracy": self.accuracy,
            "admitted": self.admitted(required),
            "path": None if self.path is None else str(self.path),
        }


class ModelZoo:
    def __init__(self, entries: list[ZooEntry], min_accuracy: float):
        self.entries = {e.name: e for e in entries}
        self.min_accuracy = min_accuracy

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    @property
    def names(self) -> list[str]:
        return list(self.entries)

    def entry(self, name: str) -> ZooEntry:
        if name not in self.entries:
            raise ConfigError(f"Model '{name}' is not in the zoo (known: {', '.join(self.entries) or 'none'})")
        return self.entries[name]

    def get(self, name: str):
        """Return an admitted model; models below the accuracy gate are refused."""
        entry = self.entry(name)
        if not entry.admitted(self.min_accuracy):
            raise ZooAdmissionError(name, entry.accuracy, self.min_accuracy)
        return entry.model

    def to_dict(self) -> dict:
        return {
            "min_accuracy": self.min_accuracy,
            "models": [e.to_dict(self.min_accuracy) for e in self.entries.values()],
        }

    @classmethod
    def load(cls, zoo: ZooConfig, names: Optional[list[str]] = None) -> ModelZoo:
        entries = []
        for spec in zoo.models:
            if names is not None and spec.name not in names:
                continue
            path = Path(zoo.dir) / f"{spec.name}{CHECKPOINT_SUFFIX}"
            checkpoint = load_checkpoint(path)
            model = model_from_description(checkpoint.metadata.get("model", {}), checkpoint.parameters)
            entries.append(ZooEntry(spec.name, model, float(checkpoint.metadata.get("accuracy", 0.0)), path))
        return cls(entries, zoo.min_accuracy)


def checkpoint_for(entry: ZooEntry, config: ExperimentConfig, **extra) -> Checkpoint:
    metadata = {
        "name": entry.name,
        "model": entry.model.describe(),
        "accuracy": entry.accuracy,
        "seed": config.seed,
        "config_hash": config.config_hash(),
        **extra,
    }
    return Checkpoint(dict(entry.model.parameters), metadata)


def zoo_summary(zoo: ModelZoo, config: ExperimentConfig) -> dict:
    return {**zoo.to_dict(), "seed": config.seed, "config_hash": config.config_hash()}


def train_zoo(config: ExperimentConfig, dataset: Dataset) -> ModelZoo:
    """Train every configured model, save its checkpoint and write the zoo summary."""
    zoo = config.zoo
    out = Path(zoo.dir)
    entries = []
    for spec in zoo.models:
        model = build_model(spec)
        result = train_model(model, dataset, zoo, spec.seed, spec.name)
        score = result.test_accuracy if result.test_accuracy is not None else (result.val_accuracy or 0.0)
        entry = ZooEntry(spec.name, model, score, out / f"{spec.name}{CHECKPOINT_SUFFIX}")
        save_checkpoint(checkpoint_for(entry, config, val_accuracy=result.val_accuracy,
                                       epoch_losses=result.epoch_losses), entry.path)
        if not entry.admitted(zoo.min_accuracy):
            logger.warning("%s reached %.4f, below the admission gate %.2f", spec.name, score, zoo.min_accuracy)
        entries.append(entry)
    trained = ModelZoo(entries, zoo.min_accuracy)
    write_json(zoo_summary(trained, config), out / ZOO_REPORT)
    return trained


def robust_checkpoint_path(config: ExperimentConfig, surrogate: str) -> Path:
    if config.robust.tokens is not None:
        return Path(config.robust.tokens)
    return Path(config.zoo.dir) / f"{surrogate}-robust{CHECKPOINT_SUFFIX}"


def load_global_tokens(config: ExperimentConfig, surrogate: str) -> Optional[RobustTokens]:
    """Global robust tokens for a surrogate, when the config asks for them."""
    if config.robust.count == 0 or config.robust.mode != "global":
        return None
    path = robust_checkpoint_path(config, surrogate)
    tokens = load_checkpoint(path).robust_tokens
    if tokens is None:
        raise ConfigError(f"checkpoint '{path}' carries no robust tokens; run 'robustify' first")
    return tokens
