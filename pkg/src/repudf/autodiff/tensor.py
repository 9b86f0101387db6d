"""Dense float64 tensors with a dynamic reverse-mode tape.

Operations only record themselves while a :class:`Tape` is active and at least
one input requires a gradient; outside a tape every op is plain numpy.

Shape rules are strict. Elementwise binary ops accept equal shapes, or a 1-D
right operand whose length equals the last axis of the left one (row
broadcast). Anything else must be made explicit with :func:`expand`.
"""
from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

from ..errors import InvalidArgumentError

_state = threading.local()


def _active() -> "Tape | None":
    return getattr(_state, "tape", None)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "is_param", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None,
                 is_param: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad or is_param)
        self.grad: np.ndarray | None = None
        self.name = name
        self.is_param = is_param

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = f" {self.name}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __getitem__(self, key):
        return index(self, key)


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(data, name=name, is_param=True)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Ordered record of primitive applications; replayed backwards by :meth:`backward`.

    Use as a context manager around the forward pass. Tapes are thread-local.
    """

    def __init__(self):
        self.nodes: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self._prev = None

    def __enter__(self):
        self._prev = _active()
        _state.tape = self
        return self

    def __exit__(self, *exc):
        _state.tape = self._prev
        return False

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], backward: Callable):
        self.nodes.append((out, inputs, backward))

    def backward(self, loss: Tensor, seed: np.ndarray | None = None,
                 accumulate: bool = True) -> dict[int, np.ndarray]:
        """Propagate from ``loss``; leaf tensors receive ``.grad``.

        Returns the gradient map keyed by ``id(tensor)`` for inspection.
        """
        if seed is None:
            if loss.data.size != 1:
                raise InvalidArgumentError("backward() without a seed needs a scalar loss")
            seed = np.ones_like(loss.data)
        grads: dict[int, np.ndarray] = {id(loss): np.asarray(seed, dtype=np.float64)}
        produced = {id(out) for out, _, _ in self.nodes}
        leaves: dict[int, Tensor] = {}
        for out, inputs, fn in reversed(self.nodes):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            in_grads = fn(g)
            for inp, gi in zip(inputs, in_grads):
                if gi is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key not in produced:
                    leaves[key] = inp
                prev = grads.get(key)
                grads[key] = gi if prev is None else prev + gi
        if id(loss) not in produced and loss.requires_grad:
            leaves[id(loss)] = loss
        for key, t in leaves.items():
            g = grads[key]
            if accumulate and t.grad is not None:
                t.grad = t.grad + g
            else:
                t.grad = np.array(g, dtype=np.float64, copy=True)
        return grads


def _make(data: np.ndarray, inputs: Sequence[Tensor], backward: Callable) -> Tensor:
    out = Tensor(data)
    tape = _active()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(out, tuple(inputs), backward)
    return out


def custom_op(data: np.ndarray, inputs: Sequence[Tensor], backward: Callable) -> Tensor:
    """Register a user-defined primitive: ``backward(g) -> grads per input``."""
    return _make(np.asarray(data, dtype=np.float64), [as_tensor(t) for t in inputs], backward)


# ---------------------------------------------------------------------------
# elementwise binary


def _binary_kind(a: Tensor, b: Tensor, op: str) -> str:
    if a.shape == b.shape:
        return "same"
    if b.ndim == 1 and a.ndim >= 1 and a.shape[-1] == b.shape[0]:
        return "row"
    raise InvalidArgumentError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _row_sum(g: np.ndarray) -> np.ndarray:
    return g.reshape(-1, g.shape[-1]).sum(axis=0)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    kind = _binary_kind(a, b, "add")

    def backward(g):
        return g, (g if kind == "same" else _row_sum(g))

    return _make(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    kind = _binary_kind(a, b, "sub")

    def backward(g):
        return g, (-g if kind == "same" else -_row_sum(g))

    return _make(a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    """Hadamard product."""
    a, b = as_tensor(a), as_tensor(b)
    kind = _binary_kind(a, b, "mul")
    ad, bd = a.data, b.data

    def backward(g):
        gb = g * ad
        return g * bd, (gb if kind == "same" else _row_sum(gb))

    return _make(ad * bd, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    kind = _binary_kind(a, b, "div")
    ad, bd = a.data, b.data

    def backward(g):
        gb = -g * ad / (bd * bd)
        return g / bd, (gb if kind == "same" else _row_sum(gb))

    return _make(ad / bd, (a, b), backward)


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)
    return _make(a.data * c, (a,), lambda g: (g * c,))


def shift(a, c: float) -> Tensor:
    a = as_tensor(a)
    return _make(a.data + float(c), (a,), lambda g: (g,))


# ---------------------------------------------------------------------------
# elementwise unary


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)
    return _make(y, (a,), lambda g: (g * (1.0 - y * y),))


def exp(a) -> Tensor:
    a = as_tensor(a)
    y = np.exp(a.data)
    return _make(y, (a,), lambda g: (g * y,))


def log(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    return _make(np.log(x), (a,), lambda g: (g / x,))


def power(a, p: float) -> Tensor:
    a = as_tensor(a)
    x = a.data
    return _make(x ** p, (a,), lambda g: (g * p * x ** (p - 1),))


def absolute(a) -> Tensor:
    a = as_tensor(a)
    s = np.sign(a.data)
    return _make(np.abs(a.data), (a,), lambda g: (g * s,))


def clampmin(a, lo: float) -> Tensor:
    a = as_tensor(a)
    mask = a.data >= lo
    return _make(np.maximum(a.data, lo), (a,), lambda g: (g * mask,))


def clampmax(a, hi: float) -> Tensor:
    """``min(a, hi)``; the gradient is zero where the clamp is active."""
    a = as_tensor(a)
    mask = a.data <= hi
    return _make(np.minimum(a.data, hi), (a,), lambda g: (g * mask,))


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b) -> Tensor:
    """``(..., n, k) @ (k, m)`` (shared right operand) or equal-batch ``(..., n, k) @ (..., k, m)``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise InvalidArgumentError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    shared = b.ndim == 2
    if not shared and a.shape[:-2] != b.shape[:-2]:
        raise InvalidArgumentError(f"matmul: batch shapes differ {a.shape} and {b.shape}")
    ad, bd = a.data, b.data

    def backward(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        if shared:
            gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            gb = np.swapaxes(ad, -1, -2) @ g
        return ga, gb

    return _make(ad @ bd, (a, b), backward)


# ---------------------------------------------------------------------------
# reductions and normalisers


def _axis_tuple(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    axes = _axis_tuple(axis, a.ndim)
    shape = a.shape

    def backward(g):
        g = g if keepdims else np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape).copy(),)

    return _make(np.sum(a.data, axis=axes, keepdims=keepdims), (a,), backward)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _axis_tuple(axis, a.ndim)
    n = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    return scale(sum(a, axis=axes, keepdims=keepdims), 1.0 / n)


def _extremum(a: Tensor, axis: int, keepdims: bool, use_max: bool) -> Tensor:
    axis = axis % a.ndim
    arg = np.argmax(a.data, axis=axis) if use_max else np.argmin(a.data, axis=axis)
    arg_k = np.expand_dims(arg, axis)
    val = np.take_along_axis(a.data, arg_k, axis=axis)
    shape = a.shape

    def backward(g):
        gk = g if keepdims else np.expand_dims(g, axis)
        out = np.zeros(shape)
        np.put_along_axis(out, arg_k, gk, axis=axis)
        return (out,)

    return _make(val if keepdims else np.squeeze(val, axis), (a,), backward)


def max(a, axis: int = -1, keepdims: bool = False) -> Tensor:  # noqa: A001
    """Maximum along one axis; the gradient goes to the first maximiser."""
    return _extremum(as_tensor(a), axis, keepdims, True)


def min(a, axis: int = -1, keepdims: bool = False) -> Tensor:  # noqa: A001
    """Minimum along one axis; the gradient goes to the first minimiser."""
    return _extremum(as_tensor(a), axis, keepdims, False)


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    z = a.data - np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / np.sum(e, axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - np.sum(g * y, axis=axis, keepdims=True)),)

    return _make(y, (a,), backward)


def log_softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    z = a.data - np.max(a.data, axis=axis, keepdims=True)
    lse = np.log(np.sum(np.exp(z), axis=axis, keepdims=True))
    y = z - lse
    p = np.exp(y)

    def backward(g):
        return (g - p * np.sum(g, axis=axis, keepdims=True),)

    return _make(y, (a,), backward)


# ---------------------------------------------------------------------------
# structural


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise InvalidArgumentError("concat of an empty list")
    axis = axis % ts[0].ndim
    for t in ts[1:]:
        if t.ndim != ts[0].ndim or any(
                t.shape[i] != ts[0].shape[i] for i in range(t.ndim) if i != axis):
            raise InvalidArgumentError(
                f"concat: incompatible shapes {ts[0].shape} and {t.shape} on axis {axis}")
    sizes = [t.shape[axis] for t in ts]
    cuts = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _make(np.concatenate([t.data for t in ts], axis=axis), ts, backward)


def gather(a, idx) -> Tensor:
    """Rows of ``a`` selected by an integer array of any shape: ``out = a[idx]``."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise InvalidArgumentError(f"gather: index out of range for {a.shape[0]} rows")
    shape = a.shape

    def backward(g):
        out = np.zeros(shape)
        np.add.at(out, idx.reshape(-1), g.reshape((-1,) + shape[1:]))
        return (out,)

    return _make(a.data[idx], (a,), backward)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    axes = tuple(reversed(range(a.ndim))) if axes is None else tuple(axes)
    inv = tuple(np.argsort(axes))
    return _make(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),))


def index(a, key) -> Tensor:
    """Basic slicing (ints and slices only)."""
    a = as_tensor(a)
    keys = key if isinstance(key, tuple) else (key,)
    if not all(isinstance(k, (int, slice, type(Ellipsis))) for k in keys):
        raise InvalidArgumentError("index supports ints, slices and Ellipsis only")
    shape = a.shape

    def backward(g):
        out = np.zeros(shape)
        out[key] = g
        return (out,)

    return _make(a.data[key], (a,), backward)


def expand(a, shape) -> Tensor:
    """Explicit broadcast of size-1 axes to ``shape`` (same rank required)."""
    a = as_tensor(a)
    shape = tuple(shape)
    if len(shape) != a.ndim or any(s != t and s != 1 for s, t in zip(a.shape, shape)):
        raise InvalidArgumentError(f"expand: cannot expand {a.shape} to {shape}")
    axes = tuple(i for i, (s, t) in enumerate(zip(a.shape, shape)) if s == 1 and t != 1)

    def backward(g):
        return (np.sum(g, axis=axes, keepdims=True) if axes else g,)

    return _make(np.broadcast_to(a.data, shape).copy(), (a,), backward)
