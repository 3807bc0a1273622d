"""
Toy Vision Transformer.

Pre-norm blocks: a = z + MHA(LN(z)); out = a + FFN(LN(a)). The classifier reads the CLS
token only. Every block takes a BlockMods value: the hook point where redundancy
operations attach.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from redvit.autodiff import tensor as T
from redvit.autodiff.tensor import Tape, Tensor
from redvit.config.experiment import ModelSpec
from redvit.errors import ConfigError, DimensionError
from redvit.model import redundancy as R
from redvit.model.base import PARAM_PREFIX, as_image_batch, batched_logits, bind_weights, cross_entropy
from redvit.model.redundancy import BlockMods, FfnWeights, OpKind
from redvit.model.tokens import (
    AttackContext, CleanContext, Role, TokenSequence, append_robust_tokens,
)
from redvit.model.windows import window_indices
from redvit.rng import stream

Weights = Mapping[str, Tensor]


@dataclass(frozen=True)
class ViTConfig:
    image_size: int = 32
    channels: int = 3
    patch_size: int = 8
    hidden_dim: int = 32
    num_layers: int = 4
    num_heads: int = 4
    ffn_hidden: int = 64
    num_classes: int = 10

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value <= 0:
                raise ConfigError(f"ViT config field '{name}' must be positive, got {value}")
        if self.image_size % self.patch_size:
            raise ConfigError(f"image size {self.image_size} is not a multiple of patch size {self.patch_size}")
        if self.hidden_dim % self.num_heads:
            raise ConfigError(f"hidden dim {self.hidden_dim} is not a multiple of head count {self.num_heads}")

    @property
    def num_patches(self) -> int:
        return (self.image_size // self.patch_size) ** 2

    @property
    def head_dim(self) -> int:
        return self.hidden_dim // self.num_heads

    @property
    def patch_dim(self) -> int:
        return self.patch_size * self.patch_size * self.channels

    @classmethod
    def from_spec(cls, spec: ModelSpec, num_classes: int = 10) -> ViTConfig:
        return cls(
            patch_size=spec.patch_size, hidden_dim=spec.hidden_dim, num_layers=spec.num_layers,
            num_heads=spec.num_heads, ffn_hidden=spec.ffn_hidden, num_classes=num_classes,
        )


def init_vit_params(config: ViTConfig, seed: int) -> dict[str, np.ndarray]:
    rng = stream(seed, op="vit-init")
    D, F = config.hidden_dim, config.ffn_hidden

    def dense(fan_in, fan_out):
        return rng.normal(0.0, 1.0 / math.sqrt(fan_in), size=(fan_in, fan_out))

    params = {
        "patch_embed": dense(config.patch_dim, D),
        "cls_token": rng.normal(0.0, 0.02, size=D),
        "pos_embed": rng.normal(0.0, 0.02, size=(config.num_patches, D)),
    }
    for layer in range(config.num_layers):
        p = f"layers.{layer}."
        params[p + "ln1.gamma"] = np.ones(D)
        params[p + "ln1.beta"] = np.zeros(D)
        for name in ("w_q", "w_k", "w_v", "w_o"):
            params[p + "attn." + name] = dense(D, D)
        params[p + "ln2.gamma"] = np.ones(D)
        params[p + "ln2.beta"] = np.zeros(D)
        params[p + "ffn.w1"] = dense(D, F)
        params[p + "ffn.b1"] = np.zeros(F)
        params[p + "ffn.w2"] = dense(F, D)
        params[p + "ffn.b2"] = np.zeros(D)
    params["norm.gamma"] = np.ones(D)
    params["norm.beta"] = np.zeros(D)
    params["head.weight"] = dense(D, config.num_classes)
    params["head.bias"] = np.zeros(config.num_classes)
    return params


def patch_embed(images: Tensor, w: Weights, config: ViTConfig) -> TokenSequence:
    """token 0 = CLS; token i = E . flatten(patch_i) + p_i."""
    images = as_image_batch(images)
    expected = (config.image_size, config.image_size, config.channels)
    if images.shape[1:] != expected:
        raise DimensionError("image shape does not match the ViT config", images.shape[1:], expected)
    batch = images.shape[0]
    flat = T.reshape(images, (batch, int(np.prod(expected))))
    index = window_indices(config.image_size, config.image_size, config.channels,
                           config.patch_size, config.patch_size)
    patches = T.gather(flat, index)
    embedded = T.add(T.matmul(patches, w["patch_embed"]), w["pos_embed"])
    cls = T.broadcast_to(T.reshape(w["cls_token"], (1, 1, config.hidden_dim)), (batch, 1, config.hidden_dim))
    tokens = T.concat([cls, embedded], axis=1)
    return TokenSequence(tokens, (Role.CLS,) + (Role.PATCH,) * config.num_patches)


def _split_heads(x: Tensor, config: ViTConfig) -> Tensor:
    batch, length, _ = x.shape
    return T.transpose(T.reshape(x, (batch, length, config.num_heads, config.head_dim)), (0, 2, 1, 3))


def mha_forward(
    x: Tensor,
    layer: int,
    mods: BlockMods,
    w: Weights,
    config: ViTConfig,
    attention_sink: Optional[list] = None,
) -> Tensor:
    """Multi-head attention on already normalized tokens x of shape (B, T, D)."""
    p = f"layers.{layer}.attn."
    batch, length, dim = x.shape
    q = _split_heads(T.matmul(x, w[p + "w_q"]), config)
    k = _split_heads(T.matmul(x, w[p + "w_k"]), config)
    v = _split_heads(T.matmul(x, w[p + "w_v"]), config)
    logits = T.scale(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(config.head_dim))

    permute = mods.get(OpKind.PERMUTE)
    if permute is not None:
        logits = R.permute_heads(logits, permute.layer_prob, permute.ratio, permute.generator())
    sparsify = mods.get(OpKind.SPARSIFY)
    if sparsify is not None:
        logits = R.sparsify_attention(logits, sparsify.ratio, sparsify.generator(), sparsify.mode)

    weights = T.softmax(logits)
    if attention_sink is not None:
        attention_sink.append(weights.data)
    heads = T.matmul(weights, v)

    head_drop = mods.get(OpKind.HEAD_DROP)
    if head_drop is not None and not head_drop.is_neutral:
        mask = R.head_drop_mask(config.num_heads, head_drop.ratio, head_drop.generator())
        heads = T.mask_multiply(heads, mask.reshape(1, config.num_heads, 1, 1))

    merged = T.reshape(T.transpose(heads, (0, 2, 1, 3)), (batch, length, dim))
    return T.matmul(merged, w[p + "w_o"])


def ffn_weights(layer: int, w: Weights) -> FfnWeights:
    p = f"layers.{layer}.ffn."
    return FfnWeights(w[p + "w1"], w[p + "b1"], w[p + "w2"], w[p + "b2"])


def ffn_forward(x: Tensor, layer: int, mods: BlockMods, w: Weights) -> Tensor:
    weights = ffn_weights(layer, w)
    moe = mods.get(OpKind.MOE)
    if moe is not None:
        return R.ghost_moe(x, weights, moe.experts, moe.drop, moe.generator())
    drop = mods.get(OpKind.FFN_DROP)
    if drop is not None and not drop.is_neutral:
        return R.ffn_drop(x, weights, drop.ratio, drop.generator())
    return R.ffn_project(R.ffn_hidden(x, weights), weights)


def block_forward(
    seq: TokenSequence,
    layer: int,
    mods: BlockMods,
    w: Weights,
    config: ViTConfig,
    clean: Optional[CleanContext] = None,
    attention_sink: Optional[list] = None,
) -> TokenSequence:
    """Injected clean tokens live for this block only; the output has the input length."""
    if not 0 <= layer < config.num_layers:
        raise ConfigError(f"layer {layer} is outside [0, {config.num_layers})")
    length = seq.length
    inject = mods.get(OpKind.CLEAN)
    if inject is not None:
        seq = R.inject_clean_tokens(seq, clean, layer, inject.ratio, inject.generator())

    p = f"layers.{layer}."
    z = seq.tokens
    attended = mha_forward(T.layer_norm(z, w[p + "ln1.gamma"], w[p + "ln1.beta"]), layer, mods, w, config, attention_sink)
    a = T.add(z, attended)
    out = T.add(a, ffn_forward(T.layer_norm(a, w[p + "ln2.gamma"], w[p + "ln2.beta"]), layer, mods, w))
    return seq.with_tokens(out).truncate(length)


def _check_mods(mods: Optional[Sequence[BlockMods]], config: ViTConfig) -> Sequence[BlockMods]:
    if mods is None:
        return R.neutral_schedule(config.num_layers)
    if len(mods) != config.num_layers:
        raise ConfigError(f"expected {config.num_layers} block schedules, got {len(mods)}")
    return mods


def drop_patch_tokens(seq: TokenSequence, keep: Sequence[int]) -> TokenSequence:
    """Keep CLS and the listed patch tokens (0-based patch indices)."""
    rows = [0] + [int(k) + 1 for k in keep]
    return TokenSequence(T.index_select(seq.tokens, 1, rows), tuple(seq.roles[r] for r in rows))


def vit_forward(
    images: Tensor,
    w: Weights,
    config: ViTConfig,
    mods: Optional[Sequence[BlockMods]] = None,
    robust_tokens: Optional[Tensor] = None,
    clean: Optional[CleanContext] = None,
    keep_tokens: Optional[Sequence[int]] = None,
    attention_sink: Optional[list] = None,
) -> Tensor:
    mods = _check_mods(mods, config)
    seq = patch_embed(images, w, config)
    if keep_tokens is not None:
        seq = drop_patch_tokens(seq, keep_tokens)
    seq = append_robust_tokens(seq, robust_tokens)
    for layer in range(config.num_layers):
        seq = block_forward(seq, layer, mods[layer], w, config, clean, attention_sink)
    batch = seq.tokens.shape[0]
    cls = T.reshape(T.slice_axis(seq.tokens, 1, 0, 1), (batch, config.hidden_dim))
    cls = T.layer_norm(cls, w["norm.gamma"], w["norm.beta"])
    return T.add(T.matmul(cls, w["head.weight"]), w["head.bias"])


class VisionTransformer:
    kind = "vit"

    def __init__(self, config: ViTConfig, parameters: dict[str, np.ndarray]):
        self.config = config
        self.parameters = parameters

    @classmethod
    def initialize(cls, config: ViTConfig, seed: int) -> VisionTransformer:
        return cls(config, init_vit_params(config, seed))

    def describe(self) -> dict:
        return {"kind": self.kind, "config": asdict(self.config)}

    def weights(self, tape: Optional[Tape] = None) -> dict[str, Tensor]:
        return bind_weights(self.parameters, tape)

    def forward(self, images: Tensor, weights: Weights, **kwargs) -> Tensor:
        return vit_forward(images, weights, self.config, **kwargs)

    def logits(self, images: np.ndarray, batch_size: int = 256, **kwargs) -> np.ndarray:
        weights = self.weights()
        return batched_logits(lambda x: vit_forward(x, weights, self.config, **kwargs), images, batch_size)

    def _context_kwargs(self, context: Optional[AttackContext], tokens: Optional[Tensor]) -> dict:
        context = context or AttackContext()
        if tokens is None and context.robust_tokens is not None:
            tokens = T.constant(context.robust_tokens)
        return {"mods": context.mods, "robust_tokens": tokens, "clean": context.clean}

    def loss(self, image: np.ndarray, label: int, context: Optional[AttackContext] = None) -> float:
        logits = vit_forward(T.constant(image), self.weights(), self.config, **self._context_kwargs(context, None))
        return cross_entropy(logits, [label]).item()

    def input_gradient(
        self, image: np.ndarray, label: int, context: Optional[AttackContext] = None
    ) -> tuple[float, np.ndarray]:
        """Loss and its gradient with respect to the image pixels; weights stay constant."""
        tape = Tape()
        x = tape.leaf(image, "image")
        logits = vit_forward(x, self.weights(), self.config, **self._context_kwargs(context, None))
        loss = cross_entropy(logits, [label])
        return loss.item(), tape.backward(loss)["image"]

    def token_gradient(
        self, image: np.ndarray, label: int, tokens: np.ndarray, context: Optional[AttackContext] = None
    ) -> tuple[float, np.ndarray]:
        """Loss and its gradient with respect to the robust tokens."""
        tape = Tape()
        z = tape.leaf(tokens, "robust_tokens")
        logits = vit_forward(T.constant(image), self.weights(), self.config, **self._context_kwargs(context, z))
        loss = cross_entropy(logits, [label])
        return loss.item(), tape.backward(loss)["robust_tokens"]

    def loss_and_grads(self, images: np.ndarray, labels: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
        tape = Tape()
        logits = vit_forward(T.constant(images), self.weights(tape), self.config)
        loss = cross_entropy(logits, labels)
        grads = tape.backward(loss)
        return loss.item(), {name[len(PARAM_PREFIX):]: g for name, g in grads.items()}

    def capture_clean_context(self, image: np.ndarray, robust_tokens: Optional[np.ndarray] = None) -> CleanContext:
        """Per-block inputs of a benign, unmodified forward pass (CLS and patch rows)."""
        weights = self.weights()
        seq = patch_embed(T.constant(image), weights, self.config)
        width = seq.length
        seq = append_robust_tokens(seq, None if robust_tokens is None else T.constant(robust_tokens))
        captured = []
        for layer in range(self.config.num_layers):
            captured.append(seq.tokens.data[:, :width, :].copy())
            seq = block_forward(seq, layer, R.NEUTRAL, weights, self.config)
        return CleanContext(np.stack(captured))
