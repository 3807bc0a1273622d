"""
Block-level redundancy operations.

Each operation is a pure transform of attention logits, of the token sequence, or of the
FFN, parameterized by ratios and a dedicated random stream. A BlockMods value holds at most
one instance of each kind and applies them in canonical order:
CleanInject -> PermuteHeads -> SparsifyAttention -> (FFN stage) GhostMoE.
HeadDrop and FfnDrop are probe-only modifiers and never enter the policy pool.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import ClassVar, Iterable, NamedTuple, Optional

import numpy as np

from redvit.autodiff import tensor as T
from redvit.autodiff.tensor import Tensor
from redvit.config.experiment import OpsConfig
from redvit.errors import ConfigError, ContractError, DimensionError, StateError
from redvit.model.tokens import CleanContext, Role, TokenSequence
from redvit.rng import StreamKey

NEG_INF_FILL = -1e9


class OpKind(Enum):
    IDENTITY = "identity"
    SPARSIFY = "sparsify"
    PERMUTE = "permute"
    CLEAN = "clean"
    MOE = "moe"
    HEAD_DROP = "head-drop"
    FFN_DROP = "ffn-drop"


CANONICAL_ORDER = (
    OpKind.CLEAN, OpKind.PERMUTE, OpKind.SPARSIFY, OpKind.HEAD_DROP, OpKind.MOE, OpKind.FFN_DROP,
)


class MaskMode(Enum):
    MULTIPLICATIVE = "multiplicative"
    NEGINF = "neginf"


def ceil_count(ratio: float, total: int) -> int:
    # rounding first keeps products such as 0.3 * 10 from landing just above an integer
    return min(total, math.ceil(round(ratio * total, 9)))


@dataclass(frozen=True)
class OpInstance:
    kind: ClassVar[OpKind]
    stream: StreamKey = StreamKey(0)

    def generator(self) -> np.random.Generator:
        # a fresh generator per use freezes the draws of one forward pass
        return self.stream.generator()

    @property
    def is_neutral(self) -> bool:
        return False


@dataclass(frozen=True)
class Identity(OpInstance):
    kind: ClassVar[OpKind] = OpKind.IDENTITY

    @property
    def is_neutral(self) -> bool:
        return True


@dataclass(frozen=True)
class SparsifyAttention(OpInstance):
    kind: ClassVar[OpKind] = OpKind.SPARSIFY
    ratio: float = 0.0
    mode: MaskMode = MaskMode.MULTIPLICATIVE

    def __post_init__(self):
        if not 0 <= self.ratio <= 1:
            raise ConfigError(f"sparsify ratio must lie in [0, 1], got {self.ratio}")

    @property
    def is_neutral(self) -> bool:
        return self.ratio == 0


@dataclass(frozen=True)
class PermuteHeads(OpInstance):
    kind: ClassVar[OpKind] = OpKind.PERMUTE
    layer_prob: float = 0.0
    ratio: float = 0.0

    def __post_init__(self):
        if not (0 <= self.layer_prob <= 1 and 0 <= self.ratio <= 1):
            raise ConfigError("permute p and r must lie in [0, 1]")

    @property
    def is_neutral(self) -> bool:
        return self.layer_prob == 0


@dataclass(frozen=True)
class CleanInject(OpInstance):
    kind: ClassVar[OpKind] = OpKind.CLEAN
    ratio: float = 0.0

    def __post_init__(self):
        if not 0 <= self.ratio <= 1:
            raise ConfigError(f"clean ratio must lie in [0, 1], got {self.ratio}")

    @property
    def is_neutral(self) -> bool:
        return self.ratio == 0


@dataclass(frozen=True)
class GhostMoE(OpInstance):
    kind: ClassVar[OpKind] = OpKind.MOE
    experts: int = 1
    drop: float = 0.0

    def __post_init__(self):
        if self.experts < 1 or not 0 <= self.drop < 1:
            raise ConfigError(f"ghost MoE needs E >= 1 and d in [0, 1), got E={self.experts}, d={self.drop}")

    @property
    def is_neutral(self) -> bool:
        return self.experts == 1 and self.drop == 0


@dataclass(frozen=True)
class HeadDrop(OpInstance):
    kind: ClassVar[OpKind] = OpKind.HEAD_DROP
    ratio: float = 0.0

    @property
    def is_neutral(self) -> bool:
        return self.ratio == 0


@dataclass(frozen=True)
class FfnDrop(OpInstance):
    kind: ClassVar[OpKind] = OpKind.FFN_DROP
    ratio: float = 0.0

    @property
    def is_neutral(self) -> bool:
        return self.ratio == 0


@dataclass(frozen=True)
class BlockMods:
    """Active operations of one block, in canonical order."""

    ops: tuple[OpInstance, ...] = ()

    def get(self, kind: OpKind) -> Optional[OpInstance]:
        for op in self.ops:
            if op.kind is kind:
                return op
        return None

    @property
    def kinds(self) -> tuple[OpKind, ...]:
        return tuple(op.kind for op in self.ops)

    @property
    def is_neutral(self) -> bool:
        return all(op.is_neutral for op in self.ops)


NEUTRAL = BlockMods()


def neutral_schedule(num_layers: int) -> list[BlockMods]:
    return [NEUTRAL] * num_layers


def compose_block_mods(ops: Iterable[OpInstance]) -> BlockMods:
    """Sort sampled operations into canonical order; Identity contributes no transform."""
    ops = list(ops)
    kinds = [op.kind for op in ops]
    duplicates = {k.value for k in kinds if kinds.count(k) > 1}
    if duplicates:
        raise ContractError(f"duplicate operation kinds in one block: {sorted(duplicates)}")
    active = [op for op in ops if op.kind is not OpKind.IDENTITY]
    active.sort(key=lambda op: CANONICAL_ORDER.index(op.kind))
    return BlockMods(tuple(active))


def make_op(kind: OpKind, settings: OpsConfig, stream: StreamKey) -> OpInstance:
    """Materialize an operation kind with the configured parameters."""
    if kind is OpKind.IDENTITY:
        return Identity(stream)
    if kind is OpKind.SPARSIFY:
        return SparsifyAttention(stream, settings.sparsify.r, MaskMode(settings.sparsify.mode))
    if kind is OpKind.PERMUTE:
        return PermuteHeads(stream, settings.permute.p, settings.permute.r)
    if kind is OpKind.CLEAN:
        return CleanInject(stream, settings.clean.r)
    if kind is OpKind.MOE:
        return GhostMoE(stream, settings.moe.experts, settings.moe.drop)
    raise ContractError(f"operation '{kind.value}' cannot be materialized from the ops config")


# attention-stage transforms; logits have shape (B, H, T, T)

def sparsify_attention(
    logits: Tensor, ratio: float, rng: np.random.Generator, mode: MaskMode = MaskMode.MULTIPLICATIVE
) -> Tensor:
    if ratio == 0:
        return logits
    keep = rng.random(logits.shape) >= ratio
    if mode is MaskMode.NEGINF:
        return T.mask_fill(logits, keep, NEG_INF_FILL)
    return T.mask_multiply(logits, keep.astype(np.float64))


def draw_head_order(num_heads: int, layer_prob: float, ratio: float, rng: np.random.Generator) -> np.ndarray:
    order = np.arange(num_heads)
    if rng.random() >= layer_prob:
        return order
    chosen = rng.choice(num_heads, size=ceil_count(ratio, num_heads), replace=False)
    order[chosen] = chosen[rng.permutation(chosen.size)]
    return order


def permute_heads(logits: Tensor, layer_prob: float, ratio: float, rng: np.random.Generator) -> Tensor:
    """
    Output head h receives the whole logit matrix of head order[h]. Values stay with their
    own head, so the permutation only changes which attention pattern mixes each head's V.
    """
    order = draw_head_order(logits.shape[1], layer_prob, ratio, rng)
    if np.array_equal(order, np.arange(order.size)):
        return logits
    return T.index_select(logits, 1, order)


def head_drop_mask(num_heads: int, ratio: float, rng: np.random.Generator) -> np.ndarray:
    mask = np.ones(num_heads)
    mask[rng.choice(num_heads, size=ceil_count(ratio, num_heads), replace=False)] = 0.0
    return mask


# sequence-stage transform

def inject_clean_tokens(
    seq: TokenSequence, clean: Optional[CleanContext], layer: int, ratio: float, rng: np.random.Generator
) -> TokenSequence:
    if ratio == 0:
        return seq
    if clean is None:
        raise StateError("clean-token injection requires a captured clean context")
    count = ceil_count(ratio, clean.num_patches)
    if count == 0:
        return seq
    rows = clean.layer(layer)
    if rows.shape[0] != seq.tokens.shape[0] or rows.shape[2] != seq.tokens.shape[2]:
        raise DimensionError("clean context does not match the token sequence", rows.shape, seq.tokens.shape)
    # CLS sits at index 0, so patch k lives at row k + 1
    picked = rng.choice(clean.num_patches, size=count, replace=False) + 1
    return seq.extend(T.constant(rows[:, picked, :]), Role.CLEAN)


# FFN-stage transforms

class FfnWeights(NamedTuple):
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor


def ffn_hidden(x: Tensor, w: FfnWeights) -> Tensor:
    return T.gelu(T.add(T.matmul(x, w.w1), w.b1))


def ffn_project(hidden: Tensor, w: FfnWeights) -> Tensor:
    return T.add(T.matmul(hidden, w.w2), w.b2)


def ghost_moe(x: Tensor, w: FfnWeights, experts: int, drop: float, rng: np.random.Generator) -> Tensor:
    """
    Average of q dropout-masked replicas of the shared FFN, q ~ U{1..E}. Each expert owns one
    inverted-dropout mask over the hidden units, shared by all tokens.
    """
    if experts < 1 or not 0 <= drop < 1:
        raise ConfigError(f"ghost MoE needs E >= 1 and d in [0, 1), got E={experts}, d={drop}")
    q = int(rng.integers(1, experts + 1))
    hidden = ffn_hidden(x, w)
    if q == 1 and drop == 0:
        return ffn_project(hidden, w)
    masks = (rng.random((q, hidden.shape[-1])) >= drop) / (1.0 - drop)
    total = None
    for mask in masks:
        out = ffn_project(T.mask_multiply(hidden, mask), w)
        total = out if total is None else T.add(total, out)
    return T.scale(total, 1.0 / q)


def ffn_drop(x: Tensor, w: FfnWeights, ratio: float, rng: np.random.Generator) -> Tensor:
    """Zero a fixed fraction of hidden units without rescaling the survivors."""
    hidden = ffn_hidden(x, w)
    width = hidden.shape[-1]
    mask = np.ones(width)
    mask[rng.choice(width, size=ceil_count(ratio, width), replace=False)] = 0.0
    return ffn_project(T.mask_multiply(hidden, mask), w)
