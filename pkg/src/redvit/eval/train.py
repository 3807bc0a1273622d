"""Mini-batch SGD with momentum for zoo models."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from redvit.config.experiment import ZooConfig
from redvit.errors import InputError, TrainingError
from redvit.eval.dataset import Dataset
from redvit.eval.metrics import accuracy
from redvit.rng import stream

logger = logging.getLogger(__name__)


@dataclass
class TrainResult:
    model: object
    val_accuracy: Optional[float]
    test_accuracy: Optional[float]
    epoch_losses: list[float] = field(default_factory=list)


def _echo(zoo: ZooConfig, name: str, seed: int) -> dict:
    return {"model": name, "seed": seed, "epochs": zoo.epochs, "batch_size": zoo.batch_size,
            "lr": zoo.lr, "momentum": zoo.momentum}


def _split_accuracy(model, dataset: Dataset, split: str) -> Optional[float]:
    images, labels = dataset.split(split)
    return accuracy(model, images, labels) if len(labels) else None


def train_model(model, dataset: Dataset, zoo: ZooConfig, seed: int, name: str = "model") -> TrainResult:
    """Train in place on the train split; accuracy is measured on val and test."""
    images, labels = dataset.split("train")
    if len(labels) == 0:
        raise InputError("training split is empty")
    velocity = {k: np.zeros_like(v) for k, v in model.parameters.items()}
    epoch_losses = []
    for epoch in range(zoo.epochs):
        order = stream(seed, iteration=epoch, op="train-shuffle").permutation(len(labels))
        total, batches = 0.0, 0
        for start in range(0, len(order), zoo.batch_size):
            index = order[start:start + zoo.batch_size]
            loss, grads = model.loss_and_grads(images[index], labels[index])
            if not np.isfinite(loss):
                raise TrainingError(f"loss diverged at epoch {epoch}", _echo(zoo, name, seed))
            for key, grad in grads.items():
                velocity[key] = zoo.momentum * velocity[key] + grad
                model.parameters[key] = model.parameters[key] - zoo.lr * velocity[key]
            total += loss
            batches += 1
        epoch_losses.append(total / batches)
        logger.info("%s epoch %d loss %.4f", name, epoch, epoch_losses[-1])
    val_acc = _split_accuracy(model, dataset, "val")
    test_acc = _split_accuracy(model, dataset, "test")
    logger.info("%s val accuracy %s test accuracy %s", name, val_acc, test_acc)
    return TrainResult(model, val_acc, test_acc, epoch_losses)
