"""
Finite-difference verification of the reverse-mode gradients.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from redvit.autodiff import tensor as T
from redvit.autodiff.tensor import Tape, Tensor
from redvit.errors import ContractError

logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-6

ScalarFn = Callable[[Tensor], Tensor]


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-12)
    return np.abs(analytic - numeric) / denom


def finite_diff_check(
    f: ScalarFn,
    x: np.ndarray,
    h: float = DEFAULT_STEP,
    coordinates: Optional[Sequence[int]] = None,
) -> float:
    """
    Max relative error between the taped gradient of f at x and central differences.

    f receives a Tensor and must return a scalar Tensor; it is evaluated once on a tape
    and twice per checked coordinate without one. Only the flat coordinates listed in
    ``coordinates`` are checked when given.
    """
    if h <= 0:
        raise ContractError(f"finite-difference step must be positive, got {h}")
    x = np.array(x, dtype=np.float64)

    def value(point: np.ndarray) -> float:
        return f(T.constant(point)).item()

    if value(x) != value(x):
        raise ContractError("function is not deterministic; freeze its random streams")

    tape = Tape()
    out = f(tape.leaf(x, "x"))
    analytic = tape.backward(out)["x"].reshape(-1)

    coords = range(x.size) if coordinates is None else coordinates
    worst = 0.0
    flat = x.reshape(-1)
    for c in coords:
        plus, minus = flat.copy(), flat.copy()
        plus[c] += h
        minus[c] -= h
        numeric = (value(plus.reshape(x.shape)) - value(minus.reshape(x.shape))) / (2 * h)
        worst = max(worst, float(relative_error(np.array(analytic[c]), np.array(numeric))))
    return worst


@dataclass(frozen=True)
class PrimitiveCase:
    name: str
    shape: tuple[int, ...]
    fn: Callable[[Tensor, np.random.Generator], Tensor]


def _weighted(out: Tensor, rng: np.random.Generator) -> Tensor:
    # a random linear functional turns any output into a scalar with nontrivial gradient
    w = np.random.default_rng(rng.integers(2**32)).normal(size=out.shape)
    return T.sum(T.mask_multiply(out, w))


def _cases() -> list[PrimitiveCase]:
    def constant_like(shape, rng):
        return T.constant(rng.normal(size=shape))

    return [
        PrimitiveCase("matmul", (3, 4), lambda x, r: T.matmul(x, constant_like((4, 2), r))),
        PrimitiveCase("add", (3, 4), lambda x, r: T.add(x, constant_like((4,), r))),
        PrimitiveCase("mul", (3, 4), lambda x, r: T.mul(x, x)),
        PrimitiveCase("layer_norm", (3, 6), lambda x, r: T.layer_norm(
            x, constant_like((6,), r), constant_like((6,), r))),
        PrimitiveCase("gelu", (3, 4), lambda x, r: T.gelu(x)),
        PrimitiveCase("softmax", (2, 5), lambda x, r: T.softmax(x)),
        PrimitiveCase("mean", (3, 4), lambda x, r: T.mean(x, axis=0)),
        PrimitiveCase("concat", (2, 3), lambda x, r: T.concat([x, T.scale(x, 2.0)], axis=0)),
        PrimitiveCase("slice", (4, 3), lambda x, r: T.slice_axis(x, 0, 1, 3)),
        PrimitiveCase("transpose", (2, 3, 4), lambda x, r: T.transpose(x, (2, 0, 1))),
        PrimitiveCase("permute_axis", (4, 3), lambda x, r: T.index_select(x, 0, r.permutation(4))),
        PrimitiveCase("mask_multiply", (3, 4), lambda x, r: T.mask_multiply(
            x, (r.random((3, 4)) >= 0.5).astype(np.float64))),
        PrimitiveCase("mask_fill", (3, 4), lambda x, r: T.softmax(T.mask_fill(x, r.random((3, 4)) >= 0.5, -1e9))),
        PrimitiveCase("gather", (2, 6), lambda x, r: T.gather(x, np.array([[0, 5], [-1, 2]]))),
        PrimitiveCase("log_softmax", (2, 5), lambda x, r: T.log_softmax(x)),
        PrimitiveCase("broadcast_to", (1, 4), lambda x, r: T.broadcast_to(x, (3, 4))),
    ]


def check_primitives(seed: int = 0, points: int = 20, h: float = DEFAULT_STEP) -> dict[str, float]:
    """Max relative error per primitive over ``points`` random inputs each."""
    results = {}
    for case in _cases():
        worst = 0.0
        for point in range(points):
            rng_seed = np.random.default_rng([seed, point]).integers(2**32)

            def f(x: Tensor, rng_seed=rng_seed) -> Tensor:
                # rebuilding the generator on every call freezes masks and weights
                rng = np.random.default_rng(rng_seed)
                return _weighted(case.fn(x, rng), rng)

            x = np.random.default_rng([seed, point, 1]).normal(size=case.shape)
            worst = max(worst, finite_diff_check(f, x, h))
        logger.debug("gradcheck %s: %.3e", case.name, worst)
        results[case.name] = worst
    return results
