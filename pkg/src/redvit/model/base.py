from typing import Mapping, Optional, Protocol

import numpy as np

from redvit.autodiff import tensor as T
from redvit.autodiff.tensor import Tape, Tensor
from redvit.errors import InputError

PARAM_PREFIX = "params."


class Classifier(Protocol):
    """What the zoo, the trainer and the evaluation harness need from a model."""

    kind: str
    parameters: dict[str, np.ndarray]

    def describe(self) -> dict: ...

    def forward(self, images: Tensor, weights: Mapping[str, Tensor]) -> Tensor: ...

    def logits(self, images: np.ndarray, batch_size: int = 256) -> np.ndarray: ...


def bind_weights(parameters: Mapping[str, np.ndarray], tape: Optional[Tape] = None) -> dict[str, Tensor]:
    """Wrap parameter arrays as constants, or as named leaves when a tape is given."""
    if tape is None:
        return {name: Tensor(value) for name, value in parameters.items()}
    return {name: tape.leaf(value, PARAM_PREFIX + name) for name, value in parameters.items()}


def as_image_batch(images) -> Tensor:
    images = images if isinstance(images, Tensor) else T.constant(images)
    if images.ndim == 3:
        return T.reshape(images, (1,) + images.shape)
    return images


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean of -log softmax(logits)[label] over the batch; a 1-D logit vector is one example."""
    if logits.ndim == 1:
        logits = T.reshape(logits, (1, logits.shape[0]))
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    batch, classes = logits.shape
    if labels.shape != (batch,):
        raise InputError(f"expected {batch} labels, got {labels.shape[0]}")
    if labels.min() < 0 or labels.max() >= classes:
        raise InputError(f"labels must lie in [0, {classes}), got {labels.min()}..{labels.max()}")
    onehot = np.zeros((batch, classes))
    onehot[np.arange(batch), labels] = 1.0
    picked = T.sum(T.mask_multiply(T.log_softmax(logits), onehot))
    return T.scale(picked, -1.0 / batch)


def batched_logits(forward, images: np.ndarray, batch_size: int) -> np.ndarray:
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 3:
        images = images[None]
    chunks = [forward(T.constant(images[i:i + batch_size])).data for i in range(0, len(images), batch_size)]
    return np.concatenate(chunks, axis=0)


def predict(model: Classifier, images: np.ndarray, batch_size: int = 256) -> np.ndarray:
    # argmax breaks ties towards the lowest class index
    return np.argmax(model.logits(images, batch_size=batch_size), axis=-1)
