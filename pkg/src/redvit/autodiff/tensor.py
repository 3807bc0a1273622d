"""
Dense float64 tensors with a dynamic reverse-mode tape.

A Tape is created per forward pass. Leaves are registered by name with ``Tape.leaf``; every
primitive applied to a taped tensor appends one node, so nodes are stored in topological
order. ``Tape.backward`` sweeps the nodes once in reverse and returns the gradient of a
scalar output with respect to every leaf. Tensors built without a tape are plain constants.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np
from scipy.special import erf

from redvit.errors import ContractError, DimensionError, TapeStateError

LAYER_NORM_EPS = 1e-5

ArrayLike = Union[np.ndarray, float, int, Sequence[float]]
BackwardFn = Callable[[np.ndarray], tuple[Optional[np.ndarray], ...]]


@dataclass
class Node:
    op: str
    inputs: tuple[Optional[int], ...]
    backward: Optional[BackwardFn]
    name: Optional[str] = None


class Tensor:
    __slots__ = ("data", "tape", "node")

    def __init__(self, data: ArrayLike, tape: Optional[Tape] = None, node: Optional[int] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.tape = tape
        self.node = node

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        taped = "taped" if self.node is not None else "constant"
        return f"<Tensor shape={list(self.shape)} {taped}>"

    def __add__(self, other) -> Tensor:
        return add(self, as_tensor(other))

    def __radd__(self, other) -> Tensor:
        return add(as_tensor(other), self)

    def __sub__(self, other) -> Tensor:
        return sub(self, as_tensor(other))

    def __rsub__(self, other) -> Tensor:
        return sub(as_tensor(other), self)

    def __mul__(self, other) -> Tensor:
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, as_tensor(other))

    def __rmul__(self, other) -> Tensor:
        return self.__mul__(other)

    def __truediv__(self, other: float) -> Tensor:
        return scale(self, 1.0 / float(other))

    def __neg__(self) -> Tensor:
        return scale(self, -1.0)

    def __matmul__(self, other: Tensor) -> Tensor:
        return matmul(self, other)


class Tape:
    def __init__(self):
        self.nodes: list[Node] = []
        self.leaves: dict[str, int] = {}
        self.leaf_shapes: dict[str, tuple[int, ...]] = {}
        self.consumed = False

    def __len__(self) -> int:
        return len(self.nodes)

    def leaf(self, value: ArrayLike, name: str) -> Tensor:
        self._check_open()
        if name in self.leaves:
            raise ContractError(f"Leaf '{name}' is already registered on this tape")
        self.nodes.append(Node("leaf", (), None, name))
        index = len(self.nodes) - 1
        data = np.array(value, dtype=np.float64)
        self.leaves[name] = index
        self.leaf_shapes[name] = data.shape
        return Tensor(data, self, index)

    def record(self, op: str, inputs: Sequence[Tensor], out: np.ndarray, backward: BackwardFn) -> Tensor:
        self._check_open()
        refs = tuple(t.node if t.tape is self else None for t in inputs)
        self.nodes.append(Node(op, refs, backward))
        return Tensor(out, self, len(self.nodes) - 1)

    def backward(self, output: Tensor) -> dict[str, np.ndarray]:
        """
        Gradient of a scalar output with respect to every leaf of this tape.
        The tape is consumed: it can neither record nor run backward again.
        """
        if output.tape is not self or output.node is None:
            raise TapeStateError("backward requires an output recorded on this tape")
        if output.size != 1:
            raise ContractError(f"backward requires a scalar output, got shape {list(output.shape)}")
        self._check_open()
        self.consumed = True

        grads: list[Optional[np.ndarray]] = [None] * len(self.nodes)
        grads[output.node] = np.ones_like(output.data)
        for index in range(output.node, -1, -1):
            grad = grads[index]
            node = self.nodes[index]
            if grad is None or node.backward is None:
                continue
            for ref, g in zip(node.inputs, node.backward(grad)):
                if ref is None or g is None:
                    continue
                grads[ref] = g if grads[ref] is None else grads[ref] + g
            grads[index] = None if node.op != "leaf" else grad

        # leaves the output does not depend on get zeros of their own shape
        result = {}
        for name, index in self.leaves.items():
            g = grads[index]
            result[name] = np.zeros(self.leaf_shapes[name]) if g is None else g
        return result

    def _check_open(self):
        if self.consumed:
            raise TapeStateError("tape was already consumed by backward")


def backward(output: Tensor) -> dict[str, np.ndarray]:
    if output.tape is None:
        raise TapeStateError("backward called on a tensor that is not recorded on any tape")
    return output.tape.backward(output)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def constant(value: ArrayLike) -> Tensor:
    return Tensor(np.array(value, dtype=np.float64))


def _tape_of(inputs: Iterable[Tensor]) -> Optional[Tape]:
    tape = None
    for t in inputs:
        if t.tape is None:
            continue
        if tape is None:
            tape = t.tape
        elif t.tape is not tape:
            raise ContractError("inputs are recorded on different tapes")
    return tape


def _apply(op: str, inputs: Sequence[Tensor], out: np.ndarray, backward_fn: BackwardFn) -> Tensor:
    tape = _tape_of(inputs)
    if tape is None:
        return Tensor(out)
    return tape.record(op, inputs, out, backward_fn)


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# elementwise

def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data + b.data
    except ValueError as e:
        raise DimensionError("add operands do not broadcast", a.shape, b.shape) from e
    return _apply("add", (a, b), out, lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data - b.data
    except ValueError as e:
        raise DimensionError("sub operands do not broadcast", a.shape, b.shape) from e
    return _apply("sub", (a, b), out, lambda g: (unbroadcast(g, a.shape), unbroadcast(-g, b.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data * b.data
    except ValueError as e:
        raise DimensionError("mul operands do not broadcast", a.shape, b.shape) from e
    return _apply(
        "mul", (a, b), out,
        lambda g: (unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)),
    )


def scale(a: Tensor, factor: float) -> Tensor:
    return _apply("scale", (a,), a.data * factor, lambda g: (g * factor,))


def mask_multiply(a: Tensor, mask: np.ndarray) -> Tensor:
    """Multiply by a constant mask; no gradient flows into the mask."""
    mask = np.asarray(mask, dtype=np.float64)
    return _apply("mask_multiply", (a,), a.data * mask, lambda g: (unbroadcast(g * mask, a.shape),))


def mask_fill(a: Tensor, keep: np.ndarray, value: float) -> Tensor:
    keep = np.broadcast_to(np.asarray(keep, dtype=bool), a.shape)
    out = np.where(keep, a.data, value)
    return _apply("mask_fill", (a,), out, lambda g: (np.where(keep, g, 0.0),))


def relu(a: Tensor) -> Tensor:
    positive = a.data > 0
    return _apply("relu", (a,), np.where(positive, a.data, 0.0), lambda g: (np.where(positive, g, 0.0),))


def gelu(a: Tensor) -> Tensor:
    """Exact GELU, x * Phi(x), with Phi the standard normal CDF."""
    x = a.data
    cdf = 0.5 * (1.0 + erf(x / math.sqrt(2.0)))
    pdf = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return _apply("gelu", (a,), x * cdf, lambda g: (g * (cdf + x * pdf),))


# linear algebra and shape

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError("matmul inner dimensions differ", a.shape, b.shape)
    try:
        out = np.matmul(a.data, b.data)
    except ValueError as e:
        raise DimensionError("matmul batch dimensions do not broadcast", a.shape, b.shape) from e

    def backward_fn(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return unbroadcast(ga, a.shape), unbroadcast(gb, b.shape)

    return _apply("matmul", (a, b), out, backward_fn)


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _apply("transpose", (a,), np.transpose(a.data, axes), lambda g: (np.transpose(g, inverse),))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        out = a.data.reshape(tuple(shape))
    except ValueError as e:
        raise DimensionError("cannot reshape", a.shape, tuple(shape)) from e
    return _apply("reshape", (a,), out, lambda g: (g.reshape(a.shape),))


def broadcast_to(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    try:
        out = np.broadcast_to(a.data, shape).copy()
    except ValueError as e:
        raise DimensionError("cannot broadcast", a.shape, shape) from e
    return _apply("broadcast_to", (a,), out, lambda g: (unbroadcast(g, a.shape),))


def sum(a: Tensor, axis: Optional[int | tuple[int, ...]] = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out = np.sum(a.data, axis=axis, keepdims=keepdims)

    def backward_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _apply("sum", (a,), out, backward_fn)


def mean(a: Tensor, axis: Optional[int | tuple[int, ...]] = None, keepdims: bool = False) -> Tensor:
    count = a.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    out = np.mean(a.data, axis=axis, keepdims=keepdims)

    def backward_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, a.shape).copy(),)

    return _apply("mean", (a,), out, backward_fn)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise DimensionError("concat shapes differ off the join axis", *(t.shape for t in tensors)) from e
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _apply("concat", tensors, out, lambda g: tuple(np.split(g, bounds, axis=axis)))


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)

    def backward_fn(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return _apply("slice", (a,), a.data[index].copy(), backward_fn)


def index_select(a: Tensor, axis: int, indices: Sequence[int]) -> Tensor:
    """Select (and thereby permute, repeat or drop) entries along one axis."""
    indices = np.asarray(indices, dtype=np.int64)
    axis = axis % a.ndim

    def backward_fn(g):
        moved = np.zeros((a.shape[axis],) + tuple(np.delete(a.shape, axis)))
        np.add.at(moved, indices, np.moveaxis(g, axis, 0))
        return (np.moveaxis(moved, 0, axis),)

    return _apply("index_select", (a,), np.take(a.data, indices, axis=axis), backward_fn)


def gather(a: Tensor, indices: np.ndarray) -> Tensor:
    """
    Gather along the last axis with an arbitrary index array; index -1 reads a zero.
    Output shape is a.shape[:-1] + indices.shape.
    """
    indices = np.asarray(indices, dtype=np.int64)
    width = a.shape[-1]
    if indices.size and indices.max() >= width:
        raise DimensionError("gather index out of range", a.shape, indices.shape)
    safe = np.where(indices < 0, width, indices)
    padded = np.concatenate([a.data, np.zeros(a.shape[:-1] + (1,))], axis=-1)
    out = padded[..., safe]
    lead = int(np.prod(a.shape[:-1], dtype=np.int64))

    def backward_fn(g):
        flat = np.zeros((width + 1, lead))
        np.add.at(flat, safe.reshape(-1), g.reshape(lead, -1).T)
        return (flat[:width].T.reshape(a.shape),)

    return _apply("gather", (a,), out, backward_fn)


# normalizations

def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis; the stabilizing max is treated as a constant."""
    shifted = a.data - np.max(a.data, axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / np.sum(e, axis=-1, keepdims=True)
    return _apply("softmax", (a,), s, lambda g: (s * (g - np.sum(g * s, axis=-1, keepdims=True)),))


def log_softmax(a: Tensor) -> Tensor:
    shifted = a.data - np.max(a.data, axis=-1, keepdims=True)
    lse = np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))
    out = shifted - lse
    probs = np.exp(out)
    return _apply("log_softmax", (a,), out, lambda g: (g - probs * np.sum(g, axis=-1, keepdims=True),))


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    if gamma.shape != (x.shape[-1],) or beta.shape != (x.shape[-1],):
        raise DimensionError("layer_norm scale/shift must match the last axis", x.shape, gamma.shape, beta.shape)
    mu = np.mean(x.data, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(np.var(x.data, axis=-1, keepdims=True) + eps)
    xhat = (x.data - mu) * inv
    out = xhat * gamma.data + beta.data

    def backward_fn(g):
        dxhat = g * gamma.data
        dx = inv * (
            dxhat
            - np.mean(dxhat, axis=-1, keepdims=True)
            - xhat * np.mean(dxhat * xhat, axis=-1, keepdims=True)
        )
        return dx, unbroadcast(g * xhat, gamma.shape), unbroadcast(g, beta.shape)

    return _apply("layer_norm", (x, gamma, beta), out, backward_fn)
