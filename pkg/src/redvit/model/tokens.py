from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np

from redvit.autodiff import tensor as T
from redvit.autodiff.tensor import Tensor
from redvit.errors import ContractError, DimensionError

if TYPE_CHECKING:
    from redvit.model.redundancy import BlockMods


class Role(Enum):
    CLS = "cls"
    PATCH = "patch"
    ROBUST = "robust"
    CLEAN = "injected-clean"


@dataclass(frozen=True)
class TokenSequence:
    """Tokens of shape (B, T, D) plus the role of every index; index 0 is always CLS."""

    tokens: Tensor
    roles: tuple[Role, ...]

    def __post_init__(self):
        if self.tokens.ndim != 3 or self.tokens.shape[1] != len(self.roles):
            raise DimensionError("token tensor does not match its role layout",
                                 self.tokens.shape, (len(self.roles),))
        if not self.roles or self.roles[0] is not Role.CLS:
            raise ContractError("index 0 of a token sequence must be the CLS token")

    @property
    def length(self) -> int:
        return len(self.roles)

    def count(self, role: Role) -> int:
        return sum(1 for r in self.roles if r is role)

    def extend(self, extra: Tensor, role: Role) -> "TokenSequence":
        if extra.shape[1] == 0:
            return self
        return TokenSequence(T.concat([self.tokens, extra], axis=1), self.roles + (role,) * extra.shape[1])

    def truncate(self, length: int) -> "TokenSequence":
        if length == self.length:
            return self
        return TokenSequence(T.slice_axis(self.tokens, 1, 0, length), self.roles[:length])

    def with_tokens(self, tokens: Tensor) -> "TokenSequence":
        return TokenSequence(tokens, self.roles)


def append_robust_tokens(seq: TokenSequence, robust_tokens: Optional[Tensor]) -> TokenSequence:
    """Append N_r robust tokens after the patch tokens; they carry no positional term."""
    if robust_tokens is None or robust_tokens.shape[0] == 0:
        return seq
    batch, _, dim = seq.tokens.shape
    if robust_tokens.ndim != 2 or robust_tokens.shape[1] != dim:
        raise DimensionError("robust tokens must have shape (N_r, D)", robust_tokens.shape, (dim,))
    count = robust_tokens.shape[0]
    block = T.broadcast_to(T.reshape(robust_tokens, (1, count, dim)), (batch, count, dim))
    return seq.extend(block, Role.ROBUST)


@dataclass(frozen=True)
class CleanContext:
    """
    Per-block inputs of a benign forward pass, CLS and patch rows only.
    activations has shape (L, B, 1 + N, D) and is never differentiated.
    """

    activations: np.ndarray

    @property
    def num_patches(self) -> int:
        return self.activations.shape[2] - 1

    def layer(self, index: int) -> np.ndarray:
        return self.activations[index]


@dataclass(frozen=True)
class AttackContext:
    """What one forward pass of an attack iteration runs with."""

    mods: Optional[Sequence["BlockMods"]] = None
    robust_tokens: Optional[np.ndarray] = None
    clean: Optional[CleanContext] = None
