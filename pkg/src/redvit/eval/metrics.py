from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from redvit.errors import DimensionError, InputError, UndefinedRateError
from redvit.model.base import predict

FILTERS = ("all", "clean-correct")

# Full-scale ImageNet fooling rates (percent) of a ViT-B/16 surrogate against eight
# victims, for plain MI-FGSM and for the complete redundancy attack. Reference values for
# the aggregation arithmetic only; nothing at desk scale is compared against them.
REFERENCE_ROWS = {
    "mi": (39.4, 58.4, 57.9, 42.2, 97.4, 40.4, 42.0, 55.0),
    "ours": (77.7, 90.6, 91.1, 79.9, 99.7, 78.9, 83.5, 93.5),
}


def accuracy(model, images: np.ndarray, labels: np.ndarray, batch_size: int = 256) -> float:
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise UndefinedRateError("accuracy of an empty set is undefined")
    return float(np.mean(predict(model, images, batch_size) == labels))


def success_rate(predictions: np.ndarray, labels: np.ndarray, keep: Optional[np.ndarray] = None) -> float:
    """Fraction of kept examples whose prediction differs from the true label."""
    predictions, labels = np.asarray(predictions), np.asarray(labels)
    if predictions.shape != labels.shape:
        raise DimensionError("predictions and labels do not align", predictions.shape, labels.shape)
    if keep is not None:
        predictions, labels = predictions[keep], labels[keep]
    if len(labels) == 0:
        raise UndefinedRateError("no examples left after filtering; the success rate is undefined")
    return float(np.mean(predictions != labels))


def attack_success_rate(
    victim,
    adv_images: np.ndarray,
    labels: np.ndarray,
    filter: str = "all",  # noqa: A002
    clean_images: Optional[np.ndarray] = None,
    batch_size: int = 256,
) -> float:
    if filter not in FILTERS:
        raise InputError(f"Unknown filter '{filter}', expected one of {FILTERS}")
    if len(adv_images) != len(labels):
        raise DimensionError("adversarial batch and labels do not align", (len(adv_images),), (len(labels),))
    keep = None
    if filter == "clean-correct":
        if clean_images is None:
            raise InputError("the clean-correct filter needs the clean images")
        keep = predict(victim, clean_images, batch_size) == np.asarray(labels)
    return success_rate(predict(victim, adv_images, batch_size), labels, keep)


def row_average(values: Sequence[float]) -> float:
    if len(values) == 0:
        raise UndefinedRateError("average of an empty row is undefined")
    return float(np.mean(values))


def mean_std(values: Sequence[float]) -> tuple[float, float]:
    values = np.asarray(values, dtype=np.float64)
    return float(values.mean()), float(values.std())
