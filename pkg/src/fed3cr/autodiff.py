"""Minimal reverse-mode tape over numpy arrays.

Covers exactly the operations the training objective needs: dense
matrix/vector arithmetic, row gathering from embedding tables, stable
softmax/sigmoid, and the clamped logs used by the losses. Gradients are
accumulated by walking the recorded graph in reverse topological order,
so parameters that feed several paths (an embedding table that enters
both a prototype mean and a scoring head, say) receive the sum of all
path contributions.
"""

from __future__ import annotations

from typing import Callable, Union

import numpy as np

from .errors import ShapeError

ArrayLike = Union["Tensor", np.ndarray, float, int]

# A parent edge: (parent tensor, function mapping output grad -> parent grad)
GradFn = Callable[[np.ndarray], np.ndarray]


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A numpy array plus the bookkeeping needed for reverse-mode backprop."""

    __slots__ = ("data", "grad", "requires_grad", "_edges")

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        _edges: tuple[tuple["Tensor", GradFn], ...] = (),
    ):
        self.data = data.data if isinstance(data, Tensor) else np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad or any(p.requires_grad for p, _ in _edges)
        self._edges = _edges if self.requires_grad else ()

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- graph construction --------------------------------------------------

    def backward(self) -> None:
        """Fill `.grad` on every reachable tensor with d(self)/d(tensor)."""
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent, _ in node._edges:
                stack.append((parent, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            out_grad = node.grad
            if out_grad is None:
                continue
            for parent, grad_fn in node._edges:
                if not parent.requires_grad:
                    continue
                contribution = grad_fn(out_grad)
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.data)
                parent.grad = parent.grad + contribution

    # -- operator sugar --------------------------------------------------------

    def __add__(self, other: ArrayLike) -> "Tensor":
        return add(self, other)

    def __radd__(self, other: ArrayLike) -> "Tensor":
        return add(other, self)

    def __sub__(self, other: ArrayLike) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other: ArrayLike) -> "Tensor":
        return mul(other, self)

    def __truediv__(self, other: ArrayLike) -> "Tensor":
        return div(self, other)

    def __rtruediv__(self, other: ArrayLike) -> "Tensor":
        return div(other, self)

    def __neg__(self) -> "Tensor":
        return mul(self, -1.0)

    def __pow__(self, exponent: float) -> "Tensor":
        return power(self, exponent)

    def __matmul__(self, other: ArrayLike) -> "Tensor":
        return matmul(self, other)


def as_tensor(x: ArrayLike) -> Tensor:
    """Wrap an array or scalar as a constant (non-trainable) tensor."""
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def _pair(a: ArrayLike, b: ArrayLike) -> tuple[Tensor, Tensor]:
    """Wrap both operands; python scalars adopt the other operand's dtype so
    float32 graphs are not silently promoted."""
    if isinstance(b, (int, float)) and not isinstance(a, (int, float)):
        a = as_tensor(a)
        return a, Tensor(np.asarray(b, dtype=a.data.dtype))
    if isinstance(a, (int, float)) and not isinstance(b, (int, float)):
        b = as_tensor(b)
        return Tensor(np.asarray(a, dtype=b.data.dtype)), b
    return as_tensor(a), as_tensor(b)


def parameter(x: np.ndarray) -> Tensor:
    """Wrap an array as a trainable leaf."""
    return Tensor(np.asarray(x), requires_grad=True)


# -- arithmetic ----------------------------------------------------------------


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _pair(a, b)
    return Tensor(
        a.data + b.data,
        _edges=(
            (a, lambda g: _unbroadcast(g, a.data.shape)),
            (b, lambda g: _unbroadcast(g, b.data.shape)),
        ),
    )


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _pair(a, b)
    return Tensor(
        a.data - b.data,
        _edges=(
            (a, lambda g: _unbroadcast(g, a.data.shape)),
            (b, lambda g: _unbroadcast(-g, b.data.shape)),
        ),
    )


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _pair(a, b)
    return Tensor(
        a.data * b.data,
        _edges=(
            (a, lambda g: _unbroadcast(g * b.data, a.data.shape)),
            (b, lambda g: _unbroadcast(g * a.data, b.data.shape)),
        ),
    )


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _pair(a, b)
    return Tensor(
        a.data / b.data,
        _edges=(
            (a, lambda g: _unbroadcast(g / b.data, a.data.shape)),
            (b, lambda g: _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape)),
        ),
    )


def power(a: ArrayLike, exponent: float) -> Tensor:
    a = as_tensor(a)
    return Tensor(
        a.data**exponent,
        _edges=((a, lambda g: g * exponent * a.data ** (exponent - 1.0)),),
    )


def sqrt(a: ArrayLike) -> Tensor:
    return power(a, 0.5)


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    """Matrix product for 2-D @ 2-D, 2-D @ 1-D and 1-D @ 1-D operands."""
    a, b = as_tensor(a), as_tensor(b)
    inner_a = a.data.shape[-1]
    inner_b = b.data.shape[0]
    if inner_a != inner_b:
        raise ShapeError(f"matmul inner dimensions differ: {a.data.shape} @ {b.data.shape}")

    def grad_a(g: np.ndarray) -> np.ndarray:
        if a.data.ndim == 1 and b.data.ndim == 1:
            return g * b.data
        if b.data.ndim == 1:
            return np.outer(g, b.data)
        if a.data.ndim == 1:
            return g @ b.data.T
        return g @ b.data.T

    def grad_b(g: np.ndarray) -> np.ndarray:
        if a.data.ndim == 1 and b.data.ndim == 1:
            return g * a.data
        if b.data.ndim == 1:
            return a.data.T @ g
        if a.data.ndim == 1:
            return np.outer(a.data, g)
        return a.data.T @ g

    return Tensor(a.data @ b.data, _edges=((a, grad_a), (b, grad_b)))


def transpose(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return Tensor(a.data.T, _edges=((a, lambda g: g.T),))


def reshape(a: ArrayLike, shape: tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    return Tensor(a.data.reshape(shape), _edges=((a, lambda g: g.reshape(a.data.shape)),))


def concat(parts: list[Tensor | np.ndarray]) -> Tensor:
    """Concatenate 1-D tensors."""
    tensors = [as_tensor(p) for p in parts]
    sizes = [t.data.shape[0] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def make_grad(i: int) -> GradFn:
        return lambda g: g[offsets[i] : offsets[i + 1]]

    edges = tuple((t, make_grad(i)) for i, t in enumerate(tensors))
    return Tensor(np.concatenate([t.data for t in tensors]), _edges=edges)


def gather_rows(a: ArrayLike, indices: np.ndarray) -> Tensor:
    """Select rows of a 2-D tensor; gradients scatter-add back."""
    a = as_tensor(a)
    idx = np.asarray(indices)

    def grad_a(g: np.ndarray) -> np.ndarray:
        out = np.zeros_like(a.data)
        np.add.at(out, idx, g)
        return out

    return Tensor(a.data[idx], _edges=((a, grad_a),))


# -- reductions ------------------------------------------------------------------


def tsum(a: ArrayLike, axis: int | None = None) -> Tensor:
    a = as_tensor(a)

    def grad_a(g: np.ndarray) -> np.ndarray:
        if axis is None:
            return np.broadcast_to(g, a.data.shape).copy()
        return np.broadcast_to(np.expand_dims(g, axis), a.data.shape).copy()

    return Tensor(a.data.sum(axis=axis), _edges=((a, grad_a),))


def tmean(a: ArrayLike, axis: int | None = None) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else a.data.shape[axis]
    return mul(tsum(a, axis=axis), 1.0 / count)


def dot(a: ArrayLike, b: ArrayLike) -> Tensor:
    """Inner product of two 1-D tensors."""
    return tsum(mul(a, b))


# -- nonlinearities ---------------------------------------------------------------


def relu(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return Tensor(np.where(mask, a.data, 0.0), _edges=((a, lambda g: g * mask),))


def sigmoid(a: ArrayLike) -> Tensor:
    """Numerically stable logistic function."""
    a = as_tensor(a)
    x = a.data
    z = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    return Tensor(out, _edges=((a, lambda g: g * out * (1.0 - out)),))


def exp(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return Tensor(out, _edges=((a, lambda g: g * out),))


def log(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return Tensor(np.log(a.data), _edges=((a, lambda g: g / a.data),))


def clip(a: ArrayLike, lo: float | None, hi: float | None) -> Tensor:
    """Clamp values; gradient passes through the un-clamped region only."""
    a = as_tensor(a)
    out = np.clip(a.data, lo, hi)
    inside = np.ones_like(a.data, dtype=bool)
    if lo is not None:
        inside &= a.data >= lo
    if hi is not None:
        inside &= a.data <= hi
    return Tensor(out, _edges=((a, lambda g: g * inside),))


def softmax(a: ArrayLike) -> Tensor:
    """Stable softmax over a 1-D tensor."""
    a = as_tensor(a)
    shifted = a.data - a.data.max()
    e = np.exp(shifted)
    out = e / e.sum()

    def grad_a(g: np.ndarray) -> np.ndarray:
        return out * (g - np.dot(g, out))

    return Tensor(out, _edges=((a, grad_a),))
