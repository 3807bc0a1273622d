"""Small convolutional classifier used as a non-transformer victim."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Mapping, Optional

import numpy as np

from redvit.autodiff import tensor as T
from redvit.autodiff.tensor import Tape, Tensor
from redvit.config.experiment import ModelSpec
from redvit.errors import ConfigError, DimensionError
from redvit.model.base import PARAM_PREFIX, as_image_batch, batched_logits, bind_weights, cross_entropy
from redvit.model.windows import output_size, window_indices
from redvit.rng import stream

KERNEL = 3
STRIDE = 2
PADDING = 1


@dataclass(frozen=True)
class ConvConfig:
    image_size: int = 32
    channels: int = 3
    widths: tuple[int, ...] = (16, 32, 64)
    num_classes: int = 10

    def __post_init__(self):
        if not self.widths or min(self.widths) <= 0:
            raise ConfigError(f"conv widths must be positive, got {self.widths}")
        if self.image_size <= 0 or self.channels <= 0 or self.num_classes <= 0:
            raise ConfigError("conv image size, channels and classes must be positive")

    @classmethod
    def from_spec(cls, spec: ModelSpec, num_classes: int = 10) -> ConvConfig:
        return cls(widths=tuple(spec.widths), num_classes=num_classes)

    def stages(self) -> list[tuple[int, int, int]]:
        """(input size, input channels, output channels) of every conv stage."""
        size, channels, stages = self.image_size, self.channels, []
        for width in self.widths:
            stages.append((size, channels, width))
            size = output_size(size, KERNEL, STRIDE, PADDING)
            channels = width
        return stages


def init_conv_params(config: ConvConfig, seed: int) -> dict[str, np.ndarray]:
    rng = stream(seed, op="cnn-init")
    params = {}
    for i, (_, c_in, c_out) in enumerate(config.stages()):
        fan_in = KERNEL * KERNEL * c_in
        params[f"conv{i}.weight"] = rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(fan_in, c_out))
        params[f"conv{i}.bias"] = np.zeros(c_out)
    width = config.widths[-1]
    params["head.weight"] = rng.normal(0.0, 1.0 / math.sqrt(width), size=(width, config.num_classes))
    params["head.bias"] = np.zeros(config.num_classes)
    return params


def conv_forward(images: Tensor, w: Mapping[str, Tensor], config: ConvConfig) -> Tensor:
    images = as_image_batch(images)
    expected = (config.image_size, config.image_size, config.channels)
    if images.shape[1:] != expected:
        raise DimensionError("image shape does not match the conv config", images.shape[1:], expected)
    batch = images.shape[0]
    x = T.reshape(images, (batch, int(np.prod(expected))))
    positions = None
    for i, (size, c_in, c_out) in enumerate(config.stages()):
        cols = T.gather(x, window_indices(size, size, c_in, KERNEL, STRIDE, PADDING))
        out = T.relu(T.add(T.matmul(cols, w[f"conv{i}.weight"]), w[f"conv{i}.bias"]))
        positions = out.shape[1]
        x = T.reshape(out, (batch, positions * c_out))
    pooled = T.mean(T.reshape(x, (batch, positions, config.widths[-1])), axis=1)
    return T.add(T.matmul(pooled, w["head.weight"]), w["head.bias"])


class ConvNet:
    kind = "cnn"

    def __init__(self, config: ConvConfig, parameters: dict[str, np.ndarray]):
        self.config = config
        self.parameters = parameters

    @classmethod
    def initialize(cls, config: ConvConfig, seed: int) -> ConvNet:
        return cls(config, init_conv_params(config, seed))

    def describe(self) -> dict:
        return {"kind": self.kind, "config": asdict(self.config)}

    def weights(self, tape: Optional[Tape] = None) -> dict[str, Tensor]:
        return bind_weights(self.parameters, tape)

    def forward(self, images: Tensor, weights: Mapping[str, Tensor], **_) -> Tensor:
        return conv_forward(images, weights, self.config)

    def logits(self, images: np.ndarray, batch_size: int = 256, **_) -> np.ndarray:
        weights = self.weights()
        return batched_logits(lambda x: conv_forward(x, weights, self.config), images, batch_size)

    def loss(self, image: np.ndarray, label: int, context=None) -> float:
        return cross_entropy(conv_forward(T.constant(image), self.weights(), self.config), [label]).item()

    def input_gradient(self, image: np.ndarray, label: int, context=None) -> tuple[float, np.ndarray]:
        # redundancy contexts only apply to transformer blocks and are ignored here
        tape = Tape()
        x = tape.leaf(image, "image")
        loss = cross_entropy(conv_forward(x, self.weights(), self.config), [label])
        return loss.item(), tape.backward(loss)["image"]

    def loss_and_grads(self, images: np.ndarray, labels: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
        tape = Tape()
        loss = cross_entropy(conv_forward(T.constant(images), self.weights(tape), self.config), labels)
        grads = tape.backward(loss)
        return loss.item(), {name[len(PARAM_PREFIX):]: g for name, g in grads.items()}
