"""Minimal reverse-mode autodiff over float64 numpy arrays.

Every op builds a node holding its inputs and a backward closure; calling
``backward()`` on a scalar runs the closures in reverse topological order.
Non-finite values raise immediately at construction, so a NaN surfaces at the
op that produced it.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import NumericError

__all__ = [
    "Tensor",
    "tensor",
    "add", "sub", "mul", "div", "neg", "pow_", "matmul",
    "exp", "log", "sqrt", "relu", "gelu", "sigmoid", "tanh",
    "softmax", "tsum", "tmean", "tmax",
    "transpose", "swapaxes", "reshape", "concat", "broadcast_to",
    "embedding", "clip",
]


def _quiet():
    return np.errstate(divide="ignore", invalid="ignore", over="ignore")


def _check_finite(arr: np.ndarray) -> np.ndarray:
    # single-pass screen: any nan/inf contaminates the sum; values large
    # enough to overflow a finite sum get the exact two-pass check
    with _quiet():
        total = float(arr.sum())
    if not math.isfinite(total) and not np.isfinite(arr).all():
        raise NumericError("non-finite value produced")
    return arr


def _sum_to_shape(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Undo numpy broadcasting: reduce grad back to the given shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None):
        arr = np.asarray(data, dtype=np.float64)
        _check_finite(arr)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def accumulate(self, grad: np.ndarray) -> None:
        # copy on first write: the same buffer may be routed to two parents
        if self.grad is None:
            self.grad = np.array(grad, dtype=np.float64)
            if self.grad.shape != self.data.shape:
                self.grad = np.broadcast_to(self.grad, self.data.shape).copy()
        else:
            self.grad += grad

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return pow_(self, exponent)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward) -> Tensor:
    needs = any(p.requires_grad or p._parents for p in parents)
    if not needs:
        return Tensor(data)
    out = Tensor(data, _parents=tuple(parents), _backward=backward)
    out.requires_grad = True
    return out


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out_data = a.data + b.data

    def backward(grad):
        if a.requires_grad:
            a.accumulate(_sum_to_shape(grad, a.data.shape))
        if b.requires_grad:
            b.accumulate(_sum_to_shape(grad, b.data.shape))

    return _node(out_data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out_data = a.data - b.data

    def backward(grad):
        if a.requires_grad:
            a.accumulate(_sum_to_shape(grad, a.data.shape))
        if b.requires_grad:
            b.accumulate(_sum_to_shape(-grad, b.data.shape))

    return _node(out_data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out_data = a.data * b.data

    def backward(grad):
        if a.requires_grad:
            a.accumulate(_sum_to_shape(grad * b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate(_sum_to_shape(grad * a.data, b.data.shape))

    return _node(out_data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    with _quiet():
        out_data = a.data / b.data

    def backward(grad):
        if a.requires_grad:
            a.accumulate(_sum_to_shape(grad / b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate(_sum_to_shape(-grad * a.data / (b.data * b.data), b.data.shape))

    return _node(out_data, (a, b), backward)


def neg(a) -> Tensor:
    a = _wrap(a)

    def backward(grad):
        a.accumulate(-grad)

    return _node(-a.data, (a,), backward)


def pow_(a, exponent: float) -> Tensor:
    a = _wrap(a)
    e = float(exponent)
    with _quiet():
        out_data = a.data**e

    def backward(grad):
        a.accumulate(grad * e * a.data ** (e - 1.0))

    return _node(out_data, (a,), backward)


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    with _quiet():
        out_data = a.data @ b.data

    def backward(grad):
        if a.requires_grad:
            a.accumulate(_sum_to_shape(grad @ np.swapaxes(b.data, -1, -2), a.data.shape))
        if b.requires_grad:
            b.accumulate(_sum_to_shape(np.swapaxes(a.data, -1, -2) @ grad, b.data.shape))

    return _node(out_data, (a, b), backward)


def exp(a) -> Tensor:
    a = _wrap(a)
    with _quiet():
        out_data = np.exp(a.data)

    def backward(grad):
        a.accumulate(grad * out_data)

    return _node(out_data, (a,), backward)


def log(a) -> Tensor:
    a = _wrap(a)
    with _quiet():
        out_data = np.log(a.data)

    def backward(grad):
        a.accumulate(grad / a.data)

    return _node(out_data, (a,), backward)


def sqrt(a) -> Tensor:
    a = _wrap(a)
    out_data = np.sqrt(a.data)

    def backward(grad):
        a.accumulate(grad * 0.5 / out_data)

    return _node(out_data, (a,), backward)


def relu(a) -> Tensor:
    a = _wrap(a)
    out_data = np.maximum(a.data, 0.0)

    def backward(grad):
        a.accumulate(grad * (a.data > 0.0))

    return _node(out_data, (a,), backward)


def gelu(a) -> Tensor:
    """Gaussian error linear unit, exact erf form (smooth everywhere)."""
    from scipy.special import erf

    a = _wrap(a)
    x = a.data
    cdf = 0.5 * (1.0 + erf(x / math.sqrt(2.0)))
    out_data = x * cdf

    def backward(grad):
        pdf = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
        a.accumulate(grad * (cdf + x * pdf))

    return _node(out_data, (a,), backward)


def tanh(a) -> Tensor:
    a = _wrap(a)
    out_data = np.tanh(a.data)

    def backward(grad):
        a.accumulate(grad * (1.0 - out_data * out_data))

    return _node(out_data, (a,), backward)


def sigmoid(a) -> Tensor:
    a = _wrap(a)
    x = a.data
    out_data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                        np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def backward(grad):
        a.accumulate(grad * out_data * (1.0 - out_data))

    return _node(out_data, (a,), backward)


def softmax(a, axis: int = -1) -> Tensor:
    a = _wrap(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward(grad):
        inner = (grad * out_data).sum(axis=axis, keepdims=True)
        a.accumulate(out_data * (grad - inner))

    return _node(out_data, (a,), backward)


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(grad):
        g = grad
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a.accumulate(np.broadcast_to(g, a.data.shape).copy())

    return _node(out_data, (a,), backward)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    out_data = a.data.mean(axis=axis, keepdims=keepdims)
    scale = a.data.size / out_data.size

    def backward(grad):
        g = grad
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a.accumulate(np.broadcast_to(g, a.data.shape) / scale)

    return _node(out_data, (a,), backward)


def tmax(a, axis: int, keepdims: bool = False) -> Tensor:
    """Max along one axis; gradient flows to the first maximal entry."""
    a = _wrap(a)
    idx = np.argmax(a.data, axis=axis)
    out_kept = np.take_along_axis(a.data, np.expand_dims(idx, axis), axis=axis)
    out_data = out_kept if keepdims else np.squeeze(out_kept, axis=axis)

    def backward(grad):
        g = grad if keepdims else np.expand_dims(grad, axis)
        buf = np.zeros_like(a.data)
        np.put_along_axis(buf, np.expand_dims(idx, axis), g, axis=axis)
        a.accumulate(buf)

    return _node(out_data, (a,), backward)


def transpose(a, axes: tuple[int, ...]) -> Tensor:
    a = _wrap(a)
    out_data = np.transpose(a.data, axes)
    inverse = tuple(np.argsort(axes))

    def backward(grad):
        a.accumulate(np.transpose(grad, inverse))

    return _node(out_data, (a,), backward)


def swapaxes(a, ax1: int, ax2: int) -> Tensor:
    a = _wrap(a)
    nd = a.data.ndim
    axes = list(range(nd))
    axes[ax1], axes[ax2] = axes[ax2], axes[ax1]
    return transpose(a, tuple(axes))


def reshape(a, shape: tuple[int, ...]) -> Tensor:
    a = _wrap(a)
    out_data = a.data.reshape(shape)

    def backward(grad):
        a.accumulate(grad.reshape(a.data.shape))

    return _node(out_data, (a,), backward)


def concat(parts, axis: int = -1) -> Tensor:
    parts = [_wrap(p) for p in parts]
    out_data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(grad):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if not p.requires_grad:
                continue
            sl = [slice(None)] * grad.ndim
            sl[axis] = slice(lo, hi)
            p.accumulate(grad[tuple(sl)])

    return _node(out_data, tuple(parts), backward)


def broadcast_to(a, shape: tuple[int, ...]) -> Tensor:
    a = _wrap(a)
    out_data = np.broadcast_to(a.data, shape).copy()

    def backward(grad):
        a.accumulate(_sum_to_shape(grad, a.data.shape))

    return _node(out_data, (a,), backward)


def embedding(table, idx) -> Tensor:
    """Row lookup into a (vocab, h) table by an integer index array."""
    table = _wrap(table)
    idx = np.asarray(idx)
    out_data = table.data[idx]

    def backward(grad):
        buf = np.zeros_like(table.data)
        np.add.at(buf, idx, grad)
        table.accumulate(buf)

    return _node(out_data, (table,), backward)


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp values; gradient passes through strictly inside the bounds."""
    a = _wrap(a)
    out_data = np.clip(a.data, lo, hi)
    inside = (a.data > lo) & (a.data < hi)

    def backward(grad):
        a.accumulate(grad * inside)

    return _node(out_data, (a,), backward)
