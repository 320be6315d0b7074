"""Reverse-mode autodiff over float64 numpy arrays.

A :class:`Tape` records operations in creation order (which is topological)
while it is active as a context manager; :meth:`Tape.backward` replays the
records in reverse and accumulates one adjoint per input. Tapes are rebuilt
on every forward pass, there is no persistent graph.

All functional ops accept either :class:`Tensor` or plain ndarray/scalar
arguments. When no argument is a Tensor they compute directly on numpy
values, so the same loss code serves both differentiable training and fast
evaluation paths.
"""

from __future__ import annotations

import numpy as np

from . import special

_TAPE_STACK: list["Tape"] = []


def _current_tape():
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class Tape:
    """Records ops while active; replays them backward for gradients."""

    def __init__(self):
        self._nodes: list[Tensor] = []
        self._node_ids: set[int] = set()

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPE_STACK.pop()
        assert popped is self
        return False

    def _record(self, node: "Tensor") -> None:
        self._nodes.append(node)
        self._node_ids.add(id(node))

    def backward(self, output: "Tensor") -> None:
        """Accumulate d(output)/d(input) into ``.grad`` of every input.

        ``output`` must be a scalar recorded on this tape. Gradients add into
        any existing ``.grad`` buffers, so callers zero parameter grads
        between steps.
        """
        if not isinstance(output, Tensor) or id(output) not in self._node_ids:
            raise ValueError("backward target is not recorded on this tape")
        if output.data.size != 1:
            raise ValueError("backward target must be a scalar")
        output.grad = np.ones_like(output.data)
        for node in reversed(self._nodes):
            if node.grad is None or node._vjp is None:
                continue
            for parent, contrib in zip(node._parents, node._vjp(node.grad)):
                if contrib is None:
                    continue
                if parent.grad is None:
                    parent.grad = contrib.copy() if contrib.base is not None else contrib
                else:
                    parent.grad = parent.grad + contrib


class Tensor:
    """A float64 array plus an adjoint buffer and its tape record."""

    __slots__ = ("data", "grad", "_parents", "_vjp")

    # make numpy defer mixed ndarray-Tensor arithmetic to our operators
    __array_ufunc__ = None

    def __init__(self, data, _parents=(), _vjp=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self._parents = _parents
        self._vjp = _vjp
        if _parents:
            tape = _current_tape()
            if tape is not None:
                tape._record(node=self)
            else:
                self._parents = ()
                self._vjp = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"

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
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _data(x):
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def _tracing(*args) -> bool:
    return any(isinstance(a, Tensor) for a in args)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` to undo numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_finite(out: np.ndarray, op: str) -> np.ndarray:
    if not np.isfinite(out).all():
        raise FloatingPointError(f"non-finite values produced by {op}")
    return out


def add(a, b):
    da, db = _data(a), _data(b)
    out = da + db
    if not _tracing(a, b):
        return out
    parents, slots = [], []
    if isinstance(a, Tensor):
        parents.append(a)
        slots.append(da.shape)
    if isinstance(b, Tensor):
        parents.append(b)
        slots.append(db.shape)

    def vjp(g):
        return tuple(_unbroadcast(g, s) for s in slots)

    return Tensor(out, tuple(parents), vjp)


def sub(a, b):
    return add(a, mul(b, -1.0))


def mul(a, b):
    da, db = _data(a), _data(b)
    out = da * db
    if not _tracing(a, b):
        return out
    parents, vjps = [], []
    if isinstance(a, Tensor):
        parents.append(a)
        vjps.append(lambda g: _unbroadcast(g * db, da.shape))
    if isinstance(b, Tensor):
        parents.append(b)
        vjps.append(lambda g: _unbroadcast(g * da, db.shape))
    return Tensor(out, tuple(parents), lambda g: tuple(f(g) for f in vjps))


def div(a, b):
    da, db = _data(a), _data(b)
    out = da / db
    if not _tracing(a, b):
        return out
    parents, vjps = [], []
    if isinstance(a, Tensor):
        parents.append(a)
        vjps.append(lambda g: _unbroadcast(g / db, da.shape))
    if isinstance(b, Tensor):
        parents.append(b)
        vjps.append(lambda g: _unbroadcast(-g * da / (db * db), db.shape))
    return Tensor(out, tuple(parents), lambda g: tuple(f(g) for f in vjps))


def matmul(a, b):
    da, db = _data(a), _data(b)
    if da.ndim != 2 or db.ndim != 2 or da.shape[1] != db.shape[0]:
        raise ValueError(f"matmul shape mismatch: {da.shape} @ {db.shape}")
    out = da @ db
    if not _tracing(a, b):
        return out
    parents, vjps = [], []
    if isinstance(a, Tensor):
        parents.append(a)
        vjps.append(lambda g: g @ db.T)
    if isinstance(b, Tensor):
        parents.append(b)
        vjps.append(lambda g: da.T @ g)
    return Tensor(out, tuple(parents), lambda g: tuple(f(g) for f in vjps))


def affine(x, weight, bias):
    """x @ weight + bias, bias broadcast over rows."""
    dx, dw, db = _data(x), _data(weight), _data(bias)
    if dx.ndim != 2 or dw.ndim != 2 or dx.shape[1] != dw.shape[0]:
        raise ValueError(f"affine shape mismatch: input {dx.shape}, weight {dw.shape}")
    if db.shape != (dw.shape[1],):
        raise ValueError(f"affine bias shape {db.shape} incompatible with weight {dw.shape}")
    out = _check_finite(dx @ dw + db, "affine")
    if not _tracing(x, weight, bias):
        return out
    parents, vjps = [], []
    if isinstance(x, Tensor):
        parents.append(x)
        vjps.append(lambda g: g @ dw.T)
    if isinstance(weight, Tensor):
        parents.append(weight)
        vjps.append(lambda g: dx.T @ g)
    if isinstance(bias, Tensor):
        parents.append(bias)
        vjps.append(lambda g: g.sum(axis=0))
    return Tensor(out, tuple(parents), lambda g: tuple(f(g) for f in vjps))


def exp(x):
    out = np.exp(_data(x))
    if not _tracing(x):
        return out
    return Tensor(out, (x,), lambda g: (g * out,))


def exp_clip(x, lo: float = -40.0, hi: float = 40.0):
    """exp of the input clamped into [lo, hi]; gradient is zero outside."""
    dx = _data(x)
    clipped = np.clip(dx, lo, hi)
    out = np.exp(clipped)
    if not _tracing(x):
        return out
    inside = ((dx > lo) & (dx < hi)).astype(np.float64)
    return Tensor(out, (x,), lambda g: (g * out * inside,))


def log(x):
    out = np.log(_data(x))
    if not _tracing(x):
        return out
    dx = _data(x)
    return Tensor(out, (x,), lambda g: (g / dx,))


def sqrt(x):
    out = np.sqrt(_data(x))
    if not _tracing(x):
        return out
    return Tensor(out, (x,), lambda g: (g * 0.5 / out,))


def tanh(x):
    out = np.tanh(_data(x))
    if not _tracing(x):
        return out
    return Tensor(out, (x,), lambda g: (g * (1.0 - out * out),))


def relu(x):
    dx = _data(x)
    out = np.maximum(dx, 0.0)
    if not _tracing(x):
        return out
    mask = (dx > 0.0).astype(np.float64)
    return Tensor(out, (x,), lambda g: (g * mask,))


def clip(x, lo: float, hi: float):
    dx = _data(x)
    out = np.clip(dx, lo, hi)
    if not _tracing(x):
        return out
    inside = ((dx > lo) & (dx < hi)).astype(np.float64)
    return Tensor(out, (x,), lambda g: (g * inside,))


def sum_(x, axis=None, keepdims: bool = False):
    dx = _data(x)
    out = dx.sum(axis=axis, keepdims=keepdims)
    if not _tracing(x):
        return out

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, dx.shape).copy(),)

    return Tensor(out, (x,), vjp)


def mean_(x, axis=None, keepdims: bool = False):
    dx = _data(x)
    n = dx.size if axis is None else dx.shape[axis]
    return div(sum_(x, axis=axis, keepdims=keepdims), float(n))


def pick(x, indices):
    """Select one column per row: out[j] = x[j, indices[j]]."""
    dx = _data(x)
    idx = np.asarray(indices)
    if idx.ndim != 1 or idx.shape[0] != dx.shape[0]:
        raise ValueError("pick needs one column index per row")
    if idx.size and (idx.min() < 0 or idx.max() >= dx.shape[1]):
        raise IndexError("pick index out of range")
    rows = np.arange(dx.shape[0])
    out = dx[rows, idx]
    if not _tracing(x):
        return out

    def vjp(g):
        gx = np.zeros_like(dx)
        np.add.at(gx, (rows, idx), g)
        return (gx,)

    return Tensor(out, (x,), vjp)


def select_rows(x, mask):
    """Keep the rows where ``mask`` is true."""
    dx = _data(x)
    m = np.asarray(mask, dtype=bool)
    out = dx[m]
    if not _tracing(x):
        return out

    def vjp(g):
        gx = np.zeros_like(dx)
        gx[m] = g
        return (gx,)

    return Tensor(out, (x,), vjp)


def transpose(x):
    dx = _data(x)
    out = dx.T.copy()
    if not _tracing(x):
        return out
    return Tensor(out, (x,), lambda g: (g.T.copy(),))


def concat(a, b, axis: int = 1):
    da, db = _data(a), _data(b)
    out = np.concatenate([da, db], axis=axis)
    if not _tracing(a, b):
        return out
    split = da.shape[axis]

    def part(g, lo, hi):
        index = [slice(None)] * g.ndim
        index[axis] = slice(lo, hi)
        return g[tuple(index)]

    parents, vjps = [], []
    if isinstance(a, Tensor):
        parents.append(a)
        vjps.append(lambda g: part(g, 0, split))
    if isinstance(b, Tensor):
        parents.append(b)
        vjps.append(lambda g: part(g, split, out.shape[axis]))
    return Tensor(out, tuple(parents), lambda g: tuple(f(g) for f in vjps))


def digamma(x):
    dx = _data(x)
    out = special.digamma(dx)
    if not _tracing(x):
        return out
    return Tensor(out, (x,), lambda g: (g * special.trigamma(dx),))


def lgamma(x):
    dx = _data(x)
    out = special.lgamma(dx)
    if not _tracing(x):
        return out
    return Tensor(out, (x,), lambda g: (g * special.digamma(dx),))


def constant(value) -> Tensor:
    return Tensor(np.asarray(value, dtype=np.float64))
