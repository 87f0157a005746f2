"""Dense float64 tensors with tape-based reverse-mode differentiation.

Ops are plain functions (``matmul``, ``add``, ``log_softmax`` ...). A result is
recorded on a :class:`Tape` when any input is attached to one; otherwise the op
just computes a constant. ``Tape.backward`` walks the record in reverse and
returns gradients for every watched leaf, keyed by leaf name.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when an op receives inputs with incompatible shapes."""

    def __init__(self, op: str, *shapes: tuple[int, ...]):
        self.op = op
        self.shapes = shapes
        super().__init__(f"{op}: incompatible shapes " + " and ".join(str(s) for s in shapes))


class Tensor:
    """Immutable float64 array, optionally attached to a tape node."""

    __slots__ = ("data", "tape", "node")
    # make numpy scalars defer to the reflected Tensor operators
    __array_ufunc__ = None

    def __init__(self, data, tape: Tape | None = None, node: int = -1):
        arr = np.array(data, dtype=np.float64)
        arr.flags.writeable = False
        self.data = arr
        self.tape = tape
        self.node = node

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        tag = f", node={self.node}" if self.tape is not None else ""
        return f"Tensor(shape={self.shape}{tag})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __pow__(self, p: float):
        return power(self, p)


@dataclass
class _Record:
    out: int
    inputs: tuple[int, ...]
    # maps upstream gradient to one gradient per input (None = input is constant)
    vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]]


@dataclass(eq=False)
class Tape:
    """Ordered record of primitive ops; single owner, never shared across threads."""

    records: list[_Record] = field(default_factory=list)
    leaves: dict[str, int] = field(default_factory=dict)
    shapes: list[tuple[int, ...]] = field(default_factory=list)

    def _new_node(self, shape) -> int:
        self.shapes.append(tuple(shape))
        return len(self.shapes) - 1

    def watch(self, value, name: str) -> Tensor:
        """Register a leaf whose gradient ``backward`` should report."""
        if name in self.leaves:
            raise ValueError(f"leaf {name!r} already watched")
        arr = np.asarray(value, dtype=np.float64)
        node = self._new_node(arr.shape)
        self.leaves[name] = node
        return Tensor(arr, self, node)

    def backward(self, root: Tensor) -> dict[str, np.ndarray]:
        if root.tape is not self:
            raise ValueError("root was not recorded on this tape")
        if root.data.size != 1:
            raise ValueError(f"backward needs a scalar root, got shape {root.shape}")
        grads: dict[int, np.ndarray] = {root.node: np.ones(root.shape)}
        for rec in reversed(self.records):
            g = grads.pop(rec.out, None)
            if g is None:
                continue
            for inp, gi in zip(rec.inputs, rec.vjp(g)):
                if inp < 0 or gi is None:
                    continue
                if inp in grads:
                    grads[inp] = grads[inp] + gi
                else:
                    grads[inp] = gi
        return {
            name: grads.get(node, np.zeros(self.shapes[node]))
            for name, node in self.leaves.items()
        }


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(op_inputs: Sequence[Tensor], value: np.ndarray, vjp) -> Tensor:
    tapes = {t.tape for t in op_inputs if t.tape is not None}
    if not tapes:
        return Tensor(value)
    if len(tapes) > 1:
        raise ValueError("inputs recorded on different tapes")
    tape = tapes.pop()
    node = tape._new_node(value.shape)
    inputs = tuple(t.node if t.tape is tape else -1 for t in op_inputs)
    tape.records.append(_Record(node, inputs, vjp))
    return Tensor(value, tape, node)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    if len(shape) == 0:
        return np.array(g.sum())
    # bias-add: vector broadcast across rows
    return g.sum(axis=0).reshape(shape)


def _check_elementwise(op: str, a: Tensor, b: Tensor) -> None:
    sa, sb = a.shape, b.shape
    if sa == sb or sa == () or sb == ():
        return
    if len(sa) == 2 and len(sb) == 1 and sa[1] == sb[0]:
        return
    if len(sb) == 2 and len(sa) == 1 and sb[1] == sa[0]:
        return
    raise ShapeError(op, sa, sb)


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_elementwise("add", a, b)
    sa, sb = a.shape, b.shape
    return _record((a, b), a.data + b.data,
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_elementwise("sub", a, b)
    sa, sb = a.shape, b.shape
    return _record((a, b), a.data - b.data,
                   lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_elementwise("mul", a, b)
    ad, bd = a.data, b.data
    return _record((a, b), ad * bd,
                   lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    ad, bd = a.data, b.data
    return _record((a, b), ad @ bd, lambda g: (g @ bd.T, ad.T @ g))


def power(a, p: float) -> Tensor:
    """Elementwise ``a**p`` for a constant exponent.

    Where ``a == 0`` and ``p < 1`` the derivative is taken as 0 rather than inf.
    """
    a = _as_tensor(a)
    ad = a.data
    p = float(p)
    if p == 0.0:
        return _record((a,), np.ones_like(ad), lambda g: (np.zeros_like(ad),))

    def vjp(g):
        if p >= 1.0:
            return (g * p * ad ** (p - 1.0),)
        safe = np.where(ad == 0, 1.0, ad)
        return (np.where(ad == 0, 0.0, g * p * safe ** (p - 1.0)),)

    return _record((a,), ad**p, vjp)


def relu(a) -> Tensor:
    a = _as_tensor(a)
    mask = a.data > 0
    return _record((a,), np.where(mask, a.data, 0.0), lambda g: (g * mask,))


def log(a) -> Tensor:
    a = _as_tensor(a)
    ad = a.data
    return _record((a,), np.log(ad), lambda g: (g / ad,))


def exp(a) -> Tensor:
    a = _as_tensor(a)
    out = np.exp(a.data)
    return _record((a,), out, lambda g: (g * out,))


def sum(a, axis: int | None = None) -> Tensor:  # noqa: A001
    a = _as_tensor(a)
    shape = a.shape
    if axis is None:
        return _record((a,), np.array(a.data.sum()), lambda g: (np.broadcast_to(g, shape).copy(),))
    if a.data.ndim != 2 or axis not in (0, 1):
        raise ShapeError(f"sum(axis={axis})", shape)

    def vjp(g):
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _record((a,), a.data.sum(axis=axis), vjp)


def mean(a, axis: int | None = None) -> Tensor:
    a = _as_tensor(a)
    n = a.data.size if axis is None else a.shape[axis]
    return mul(sum(a, axis), 1.0 / n)


def gather(a, rows, cols) -> Tensor:
    """Pick ``a[rows[i], cols[i]]`` for each i, giving a vector."""
    a = _as_tensor(a)
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)
    if a.data.ndim != 2 or rows.shape != cols.shape or rows.ndim != 1:
        raise ShapeError("gather", a.shape, rows.shape, cols.shape)
    shape = a.shape

    def vjp(g):
        out = np.zeros(shape)
        np.add.at(out, (rows, cols), g)
        return (out,)

    return _record((a,), a.data[rows, cols], vjp)


def select_columns(a, cols) -> Tensor:
    """Columns ``cols`` of a matrix, in the given order."""
    a = _as_tensor(a)
    cols = np.asarray(cols, dtype=np.intp)
    if a.data.ndim != 2 or cols.ndim != 1 or (cols.size and (cols.min() < 0 or cols.max() >= a.shape[1])):
        raise ShapeError("select_columns", a.shape, cols.shape)
    shape = a.shape

    def vjp(g):
        out = np.zeros(shape)
        np.add.at(out, (slice(None), cols), g)
        return (out,)

    return _record((a,), a.data[:, cols], vjp)


def log_softmax(a) -> Tensor:
    """Row-wise log-softmax, stabilized by subtracting the row max."""
    a = _as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeError("log_softmax", a.shape)
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    soft = np.exp(out)
    return _record((a,), out, lambda g: (g - soft * g.sum(axis=1, keepdims=True),))


def softmax(a) -> Tensor:
    return exp(log_softmax(a))


def fd_check(
    f: Callable[[Mapping[str, Tensor]], Tensor],
    params: Mapping[str, np.ndarray],
    eps: float = 1e-5,
) -> float:
    """Max relative error between autodiff and central-difference gradients.

    ``f`` maps a dict of tensors to a scalar tensor. The error per element is
    ``|g_ad - g_fd| / (|g_fd| + 1e-8)``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    tape = Tape()
    watched = {k: tape.watch(v, k) for k, v in params.items()}
    root = f(watched)
    if not np.isfinite(root.data).all():
        raise FloatingPointError("f is not finite at the base point")
    g_ad = tape.backward(root)

    base = {k: np.array(v, dtype=np.float64) for k, v in params.items()}

    def value(arrays) -> float:
        out = float(f({k: Tensor(v) for k, v in arrays.items()}).data)
        if not np.isfinite(out):
            raise FloatingPointError("f is not finite at a perturbed point")
        return out

    worst = 0.0
    for name, arr in base.items():
        flat = arr.reshape(-1)
        g_flat = g_ad[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = value(base)
            flat[i] = orig - eps
            lo = value(base)
            flat[i] = orig
            g_fd = (hi - lo) / (2 * eps)
            worst = max(worst, abs(g_flat[i] - g_fd) / (abs(g_fd) + 1e-8))
    return worst
