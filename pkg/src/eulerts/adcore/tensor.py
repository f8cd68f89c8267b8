"""Dense float64 tensors recorded on an explicit reverse-mode tape.

Operations only record when a :class:`Tape` is active (``with tape:``) and at
least one input requires a gradient; outside a tape every op is a plain numpy
evaluation, which is what generation and metric code rely on for speed.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "Gradients",
    "ShapeError",
    "TapeError",
    "as_tensor",
    "record",
    "backward",
    "OPS",
]


class ShapeError(ValueError):
    """Raised when op inputs have incompatible shapes."""


class TapeError(RuntimeError):
    """Raised on tape misuse (non-scalar root, double backward, ...)."""


_ACTIVE: list["Tape"] = []


def _active_tape() -> "Tape | None":
    return _ACTIVE[-1] if _ACTIVE else None


class Tensor:
    __slots__ = ("value", "requires_grad", "grad", "name", "__weakref__")

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def size(self) -> int:
        return self.value.size

    def numpy(self) -> np.ndarray:
        return self.value

    def item(self) -> float:
        return float(self.value)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # operator sugar -------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scalar_mul(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        if np.isscalar(other):
            return scalar_mul(self, other)
        return mul(other, self)

    def __truediv__(self, other):
        if np.isscalar(other):
            return scalar_mul(self, 1.0 / other)
        return div(self, other)

    def __neg__(self):
        return scalar_mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return slice_(self, index)

    @property
    def T(self):
        return transpose(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims: bool = False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis=axis, keepdims=keepdims)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class _Node:
    __slots__ = ("kind", "inputs", "output", "backward")

    def __init__(self, kind, inputs, output, backward):
        self.kind = kind
        self.inputs = inputs
        self.output = output
        self.backward = backward


class Gradients:
    """Mapping from tensors to their accumulated gradient arrays.

    Tensors the root does not depend on map to zeros of their own shape.
    """

    def __init__(self, grads: dict[int, np.ndarray], tensors: dict[int, Tensor]):
        self._grads = grads
        self._tensors = tensors

    def __getitem__(self, tensor: Tensor) -> np.ndarray:
        g = self._grads.get(id(tensor))
        if g is None or self._tensors.get(id(tensor)) is not tensor:
            return np.zeros_like(tensor.value)
        return g

    def __contains__(self, tensor: Tensor) -> bool:
        return self._tensors.get(id(tensor)) is tensor


class Tape:
    """Ordered record of operations for one forward/backward cycle."""

    def __init__(self):
        self.nodes: list[_Node] = []
        self._consumed = False

    def __enter__(self) -> "Tape":
        if self._consumed:
            raise TapeError("tape already consumed by backward(); call reset() first")
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.remove(self)

    def __len__(self) -> int:
        return len(self.nodes)

    def reset(self) -> None:
        self.nodes = []
        self._consumed = False

    def backward(self, root: Tensor) -> Gradients:
        if self._consumed:
            raise TapeError("backward() called twice on the same tape without reset()")
        if root.size != 1:
            raise TapeError(f"backward root must be scalar, got shape {root.shape}")
        self._consumed = True
        grads: dict[int, np.ndarray] = {id(root): np.ones_like(root.value)}
        tensors: dict[int, Tensor] = {id(root): root}
        for node in reversed(self.nodes):
            g_out = grads.get(id(node.output))
            if g_out is None:
                continue
            in_grads = node.backward(g_out)
            for t, g in zip(node.inputs, in_grads):
                if g is None or not t.requires_grad:
                    continue
                key = id(t)
                if key in grads:
                    grads[key] = grads[key] + g
                else:
                    grads[key] = g
                    tensors[key] = t
        produced = {id(n.output) for n in self.nodes}
        for key, t in tensors.items():
            if key in produced or not t.requires_grad:
                continue
            t.grad = grads[key].copy() if t.grad is None else t.grad + grads[key]
        return Gradients(grads, tensors)


def backward(tape: Tape, root: Tensor) -> Gradients:
    return tape.backward(root)


def record(kind: str, inputs: Sequence[Tensor], value: np.ndarray,
           rule: Callable[[np.ndarray], Sequence[np.ndarray | None]]) -> Tensor:
    """Wrap ``value`` as the output of ``kind`` and, if taping, append a node.

    ``rule`` maps the output gradient to one gradient per input (or None).
    """
    tape = _active_tape()
    needs = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(value, requires_grad=needs)
    if needs:
        tape.nodes.append(_Node(kind, tuple(inputs), out, rule))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shape(kind: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{kind}: incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------------------
# elementwise binary ops


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    sa, sb = a.shape, b.shape
    return record("add", (a, b), a.value + b.value,
                  lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    sa, sb = a.shape, b.shape
    return record("sub", (a, b), a.value - b.value,
                  lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    av, bv = a.value, b.value
    return record("mul", (a, b), av * bv,
                  lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a, b)
    av, bv = a.value, b.value
    out = av / bv
    return record("div", (a, b), out,
                  lambda g: (_unbroadcast(g / bv, av.shape),
                             _unbroadcast(-g * out / bv, bv.shape)))


def scalar_mul(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)
    return record("scalar_mul", (a,), a.value * c, lambda g: (g * c,))


def matmul(a, b) -> Tensor:
    """Matrix product with numpy batching semantics on leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}") from None
    av, bv = a.value, b.value

    def rule(g):
        ga = g @ np.swapaxes(bv, -1, -2) if a.requires_grad else None
        gb = np.swapaxes(av, -1, -2) @ g if b.requires_grad else None
        return (None if ga is None else _unbroadcast(ga, av.shape),
                None if gb is None else _unbroadcast(gb, bv.shape))

    return record("matmul", (a, b), av @ bv, rule)


# ---------------------------------------------------------------------------
# elementwise unary ops


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.value)
    return record("tanh", (a,), out, lambda g: (g * (1.0 - out * out),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.value > 0
    return record("relu", (a,), np.where(mask, a.value, 0.0), lambda g: (g * mask,))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.value))
    return record("sigmoid", (a,), out, lambda g: (g * out * (1.0 - out),))


def identity(a) -> Tensor:
    return as_tensor(a)


def square(a) -> Tensor:
    a = as_tensor(a)
    av = a.value
    return record("square", (a,), av * av, lambda g: (2.0 * g * av,))


def sqrt(a) -> Tensor:
    """Square root whose gradient is defined as 0 at exactly 0."""
    a = as_tensor(a)
    out = np.sqrt(a.value)
    safe = np.where(out > 0, out, 1.0)
    return record("sqrt", (a,), out, lambda g: (np.where(out > 0, 0.5 * g / safe, 0.0),))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.value)
    return record("exp", (a,), out, lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    av = a.value
    return record("log", (a,), np.log(av), lambda g: (g / av,))


def abs_(a) -> Tensor:
    a = as_tensor(a)
    av = a.value
    return record("abs", (a,), np.abs(av), lambda g: (g * np.sign(av),))


# ---------------------------------------------------------------------------
# reductions and structural ops


def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    axes = _norm_axis(axis, a.ndim)
    out = a.value.sum(axis=axes, keepdims=keepdims)

    def rule(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape).copy(),)

    return record("sum", (a,), out, rule)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    axes = _norm_axis(axis, a.ndim)
    count = int(np.prod([shape[ax] for ax in axes])) if axes else 1
    out = a.value.mean(axis=axes, keepdims=keepdims) if axes else a.value.copy()

    def rule(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, shape).copy(),)

    return record("mean", (a,), out, rule)


def trace(a) -> Tensor:
    """Trace over the last two axes (batched)."""
    a = as_tensor(a)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ShapeError(f"trace: expected square trailing axes, got {a.shape}")
    n = a.shape[-1]
    eye = np.eye(n)
    return record("trace", (a,), np.trace(a.value, axis1=-2, axis2=-1),
                  lambda g: (g[..., None, None] * eye,))


def transpose(a) -> Tensor:
    """Swap the last two axes."""
    a = as_tensor(a)
    if a.ndim < 2:
        raise ShapeError(f"transpose: need at least 2 axes, got {a.shape}")
    return record("transpose", (a,), np.swapaxes(a.value, -1, -2),
                  lambda g: (np.swapaxes(g, -1, -2),))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    try:
        out = a.value.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {old} into {tuple(shape)}") from None
    return record("reshape", (a,), out, lambda g: (g.reshape(old),))


def concat(tensors: Iterable, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("concat: no inputs")
    ref = ts[0].shape
    ax = axis % len(ref)
    for t in ts[1:]:
        if t.ndim != len(ref) or any(s != r for i, (s, r) in enumerate(zip(t.shape, ref)) if i != ax):
            raise ShapeError(f"concat: incompatible shapes {ref} and {t.shape} along axis {axis}")
    sizes = [t.shape[ax] for t in ts]
    splits = np.cumsum(sizes)[:-1]
    return record("concat", tuple(ts), np.concatenate([t.value for t in ts], axis=ax),
                  lambda g: tuple(np.split(g, splits, axis=ax)))


def stack(tensors: Iterable, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("stack: no inputs")
    for t in ts[1:]:
        if t.shape != ts[0].shape:
            raise ShapeError(f"stack: incompatible shapes {ts[0].shape} and {t.shape}")
    out = np.stack([t.value for t in ts], axis=axis)
    ax = axis % out.ndim
    return record("stack", tuple(ts), out,
                  lambda g: tuple(np.take(g, i, axis=ax) for i in range(len(ts))))


def _is_basic_index(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (int, slice, type(None), type(Ellipsis))) for i in items)


def slice_(a, index) -> Tensor:
    """Numpy-style indexing (basic slices or integer/bool arrays)."""
    a = as_tensor(a)
    shape = a.shape
    try:
        out = a.value[index]
    except IndexError as exc:
        raise ShapeError(f"slice: index {index!r} invalid for shape {shape}: {exc}") from None
    basic = _is_basic_index(index)

    def rule(g):
        full = np.zeros(shape)
        if basic:
            full[index] += g
        else:
            np.add.at(full, index, g)
        return (full,)

    return record("slice", (a,), np.array(out, dtype=np.float64, copy=True), rule)


OPS: dict[str, Callable] = {
    "matmul": matmul,
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "scalar_mul": scalar_mul,
    "tanh": tanh,
    "relu": relu,
    "sigmoid": sigmoid,
    "square": square,
    "sqrt": sqrt,
    "exp": exp,
    "log": log,
    "abs": abs_,
    "mean": mean,
    "sum": sum_,
    "trace": trace,
    "transpose": transpose,
    "reshape": reshape,
    "concat": concat,
    "stack": stack,
    "slice": slice_,
}
