"""Dense tensors with reverse-mode automatic differentiation.

Every value flowing through the model is a Tensor wrapping a numpy
array. Operations build an acyclic graph; ``backward`` walks it in
reverse topological order and accumulates gradients into ``.grad``.
Arrays are float64 by default so finite-difference checks are exact
enough; training may pass float32.

Non-finite values are treated as corruption: constructing a Tensor
from data containing NaN/Inf raises immediately instead of letting
them spread through the graph.
"""

from __future__ import annotations

from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import GradientError, NumericError, ShapeError

DEFAULT_DTYPE = np.float64


class Tensor:
    """A dense n-dimensional array, optionally tracked by autodiff."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None,
                 _parents: tuple = (), _backward=None):
        arr = np.asarray(data, dtype=dtype or DEFAULT_DTYPE)
        if not np.all(np.isfinite(arr)):
            raise NumericError("tensor contains non-finite values (NaN or Inf)")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # Small amount of operator sugar for readability in model code.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, parents: Sequence[Tensor], backward_fn) -> Tensor:
    requires = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=requires,
                  _parents=tuple(parents) if requires else (),
                  _backward=backward_fn if requires else None)


def _accumulate(t: Tensor, grad: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += grad


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to the operand's shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# element-wise arithmetic
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data + b.data

    def bwd(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _result(out, (a, b), bwd)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data - b.data

    def bwd(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(-g, b.shape))

    return _result(out, (a, b), bwd)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data * b.data

    def bwd(g):
        _accumulate(a, _unbroadcast(g * b.data, a.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _result(out, (a, b), bwd)


def abs_diff(a, b) -> Tensor:
    """Element-wise |a - b|; symmetric in its arguments."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"abs_diff shapes differ: {a.shape} vs {b.shape}")
    diff = a.data - b.data
    sign = np.sign(diff)

    def bwd(g):
        _accumulate(a, g * sign)
        _accumulate(b, -g * sign)

    return _result(np.abs(diff), (a, b), bwd)


def tanh(x) -> Tensor:
    x = _as_tensor(x)
    out = np.tanh(x.data)

    def bwd(g):
        _accumulate(x, g * (1.0 - out * out))

    return _result(out, (x,), bwd)


def log(x) -> Tensor:
    x = _as_tensor(x)
    out = np.log(x.data)

    def bwd(g):
        _accumulate(x, g / x.data)

    return _result(out, (x,), bwd)


def clamp_min(x, floor: float) -> Tensor:
    """max(x, floor); gradient is zero in the clamped region."""
    x = _as_tensor(x)
    keep = x.data > floor

    def bwd(g):
        _accumulate(x, g * keep)

    return _result(np.maximum(x.data, floor), (x,), bwd)


# ---------------------------------------------------------------------------
# shape manipulation
# ---------------------------------------------------------------------------

def reshape(x, shape) -> Tensor:
    x = _as_tensor(x)
    old = x.shape

    def bwd(g):
        _accumulate(x, g.reshape(old))

    return _result(x.data.reshape(shape), (x,), bwd)


def swap_last_axes(x) -> Tensor:
    """Transpose the trailing two axes (matrix transpose per batch)."""
    x = _as_tensor(x)
    if x.ndim < 2:
        raise ShapeError(f"swap_last_axes needs rank >= 2, got shape {x.shape}")

    def bwd(g):
        _accumulate(x, np.swapaxes(g, -1, -2))

    return _result(np.swapaxes(x.data, -1, -2), (x,), bwd)


def slice_axis(x, axis: int, start: int, stop: int) -> Tensor:
    x = _as_tensor(x)
    axis = _check_axis(axis, x.ndim)
    index = [slice(None)] * x.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)

    def bwd(g):
        full = np.zeros_like(x.data)
        full[index] = g
        _accumulate(x, full)

    return _result(x.data[index].copy(), (x,), bwd)


def concat(parts: Iterable, axis: int = -1) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat needs at least one tensor")
    axis = _check_axis(axis, parts[0].ndim)
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            index = [slice(None)] * g.ndim
            index[axis] = slice(lo, hi)
            _accumulate(p, g[tuple(index)])

    return _result(out, parts, bwd)


def _check_axis(axis: int, ndim: int) -> int:
    if not -ndim <= axis < ndim:
        raise ShapeError(f"axis {axis} out of range for rank {ndim}")
    return axis % ndim


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def sum_(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is None:
            _accumulate(x, np.full_like(x.data, g if np.isscalar(g) else g.reshape(())))
        else:
            if not keepdims:
                g = np.expand_dims(g, axis)
            _accumulate(x, np.broadcast_to(g, x.shape).copy())

    return _result(out, (x,), bwd)


def mean_(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    count = x.size if axis is None else x.shape[_check_axis(axis, x.ndim)]
    return mul(sum_(x, axis=axis, keepdims=keepdims), 1.0 / count)


def mean_pool(x, axis: int) -> Tensor:
    """Arithmetic mean along one axis."""
    x = _as_tensor(x)
    _check_axis(axis, x.ndim)
    return mean_(x, axis=axis)


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    """Batched matrix product over the trailing two axes.

    Leading batch dimensions must be equal or broadcastable.
    """
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs rank >= 2 operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dims disagree: {a.shape} x {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise ShapeError(f"matmul batch dims incompatible: {a.shape} x {b.shape}") from exc

    def bwd(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        _accumulate(a, _unbroadcast(ga, a.shape))
        _accumulate(b, _unbroadcast(gb, b.shape))

    return _result(out, (a, b), bwd)


def linear(x, w, b) -> Tensor:
    """Affine map x @ w + b over the trailing axis."""
    x, w, b = _as_tensor(x), _as_tensor(w), _as_tensor(b)
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"linear input width {x.shape[-1]} does not match weight {w.shape}")
    return add(matmul(x, w), b) if x.ndim >= 2 else add(
        reshape(matmul(reshape(x, (1, -1)), w), (w.shape[1],)), b)


def softmax(x, axis: int = -1, mask=None) -> Tensor:
    """Softmax along ``axis`` with max-subtraction for stability.

    ``mask`` marks valid positions (broadcastable to x); masked entries
    get zero probability. A fully masked slice yields all zeros rather
    than NaN.
    """
    x = _as_tensor(x)
    axis = _check_axis(axis, x.ndim)
    if mask is not None:
        m = mask.data if isinstance(mask, Tensor) else np.asarray(mask)
        m = np.broadcast_to(m.astype(bool), x.shape)
        shifted = np.where(m, x.data, -np.inf)
        peak = np.max(shifted, axis=axis, keepdims=True)
        peak = np.where(np.isfinite(peak), peak, 0.0)
        e = np.where(m, np.exp(np.where(m, x.data - peak, 0.0)), 0.0)
    else:
        peak = np.max(x.data, axis=axis, keepdims=True)
        e = np.exp(x.data - peak)
    denom = e.sum(axis=axis, keepdims=True)
    out = np.divide(e, denom, out=np.zeros_like(e), where=denom > 0)

    def bwd(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        _accumulate(x, out * (g - inner))

    return _result(out, (x,), bwd)


def l2_normalize(x, axis: int = -1, eps: float = 1e-12) -> Tensor:
    """Scale to unit Euclidean norm along ``axis``.

    Inputs whose norm is below ``eps`` come back as all-zeros instead
    of dividing by (near) zero.
    """
    x = _as_tensor(x)
    axis = _check_axis(axis, x.ndim)
    norm = np.sqrt((x.data * x.data).sum(axis=axis, keepdims=True))
    ok = norm >= eps
    safe = np.where(ok, norm, 1.0)
    out = np.where(ok, x.data / safe, 0.0)

    def bwd(g):
        inner = (g * x.data).sum(axis=axis, keepdims=True)
        gx = np.where(ok, g / safe - x.data * inner / (safe ** 3), 0.0)
        _accumulate(x, gx)

    return _result(out, (x,), bwd)


# ---------------------------------------------------------------------------
# indexing
# ---------------------------------------------------------------------------

def embedding_rows(table, ids: np.ndarray) -> Tensor:
    """Gather rows of a (vocab, d) table by an integer id array."""
    table = _as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2:
        raise ShapeError(f"embedding table must be rank 2, got {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(f"embedding id out of range for table {table.shape}")
    out = table.data[ids]

    def bwd(g):
        if table.grad is None:
            table.grad = np.zeros_like(table.data)
        np.add.at(table.grad, ids.reshape(-1), g.reshape(-1, table.shape[1]))

    return _result(out, (table,), bwd)


def take_per_row(x, idx: np.ndarray) -> Tensor:
    """Pick x[i, idx[i]] for each row i of a rank-2 tensor."""
    x = _as_tensor(x)
    idx = np.asarray(idx, dtype=np.int64)
    if x.ndim != 2 or idx.ndim != 1 or idx.shape[0] != x.shape[0]:
        raise ShapeError(f"take_per_row needs (n, k) and (n,), got {x.shape} and {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[1]):
        raise ShapeError(f"index out of range for width {x.shape[1]}")
    rows = np.arange(x.shape[0])
    out = x.data[rows, idx]

    def bwd(g):
        full = np.zeros_like(x.data)
        full[rows, idx] = g
        _accumulate(x, full)

    return _result(out, (x,), bwd)


# ---------------------------------------------------------------------------
# regularization
# ---------------------------------------------------------------------------

def dropout(x, rate: float, training: bool, rng: Optional[np.random.Generator] = None) -> Tensor:
    """Inverted dropout: scales by 1/(1-rate) at train time, identity otherwise."""
    if not 0.0 <= rate < 1.0:
        raise ShapeError(f"dropout rate must be in [0, 1), got {rate}")
    x = _as_tensor(x)
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ShapeError("dropout in training mode needs an rng")
    keep = 1.0 - rate
    mask = (rng.random(x.shape) < keep) / keep

    def bwd(g):
        _accumulate(x, g * mask)

    return _result(x.data * mask, (x,), bwd)


# ---------------------------------------------------------------------------
# reverse pass
# ---------------------------------------------------------------------------

def backward(loss: Tensor, params: Optional[Iterable[Tensor]] = None):
    """Run the reverse pass from a scalar loss.

    Fills ``.grad`` on every reachable tensor with requires_grad. When
    ``params`` is given, returns a dict mapping each of them to its
    gradient (zeros when unreachable from the loss).
    """
    if loss.size != 1:
        raise GradientError(f"backward needs a scalar loss, got shape {loss.shape}")

    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))

    if loss.requires_grad or loss._backward is not None:
        loss.grad = np.ones_like(loss.data)
        for node in reversed(order):
            if node._backward is None or node.grad is None:
                continue
            if not np.all(np.isfinite(node.grad)):
                raise GradientError("NaN encountered during reverse pass")
            node._backward(node.grad)

    if params is None:
        return None
    out = {}
    for p in params:
        out[p] = p.grad.copy() if p.grad is not None else np.zeros_like(p.data)
    return out
