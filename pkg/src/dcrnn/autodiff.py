"""Reverse-mode differentiation over a recorded tape of float64 array operations.

Every forward computation records a :class:`Node` on a :class:`Tape`.  Calling
:meth:`Tape.backward` on a scalar node walks the tape in reverse and
accumulates gradients on every node reachable from it.

Nodes may carry a leading batch axis; all operations are written for arrays of
any leading shape so a batch of examples runs as one pass.
"""

from __future__ import annotations

from numbers import Real
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from .errors import ContractError, DimensionError, NumericalError

ACTIVATIONS = ("sigmoid", "tanh", "relu", "identity")

BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Node:
    """One recorded value on a tape."""

    __slots__ = ("id", "value", "grad", "op", "parents", "tape", "requires_grad", "name", "_backward")

    def __init__(self, tape, id, value, op, parents, backward, requires_grad, name=None):
        self.tape = tape
        self.id = id
        self.value = value
        self.op = op
        self.parents = parents
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._backward = backward

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Node(#{self.id} {self.op}{label} shape={self.shape})"

    def __add__(self, other):
        return add(self, _lift(self.tape, other))

    def __radd__(self, other):
        return add(_lift(self.tape, other), self)

    def __sub__(self, other):
        return sub(self, _lift(self.tape, other))

    def __rsub__(self, other):
        return sub(_lift(self.tape, other), self)

    def __mul__(self, other):
        if isinstance(other, Real):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


class Tape:
    """Append-only record of a forward computation.

    ``check_finite`` turns on a per-operation NaN/Inf check.  It defaults to
    on under normal interpretation and off under ``python -O``; the training
    loop switches it off and checks the loss instead.
    """

    def __init__(self, check_finite: bool = __debug__):
        self.nodes: list[Node] = []
        self.check_finite = check_finite

    def __len__(self):
        return len(self.nodes)

    def _push(self, value, op, parents=(), backward=None, name=None, requires_grad=None):
        if self.check_finite and not np.all(np.isfinite(value)):
            raise NumericalError(f"non-finite value produced by {op}")
        if requires_grad is None:
            requires_grad = any(p.requires_grad for p in parents)
        node = Node(self, len(self.nodes), value, op, tuple(parents), backward, requires_grad, name)
        self.nodes.append(node)
        return node

    def leaf(self, value, name=None, requires_grad=True) -> Node:
        """Record an input.  The array is used as-is, not copied."""
        value = np.asarray(value, dtype=np.float64)
        return self._push(value, "leaf", name=name, requires_grad=requires_grad)

    def constant(self, value, name=None) -> Node:
        return self.leaf(value, name=name, requires_grad=False)

    def backward(self, root: Node) -> None:
        """Fill ``grad`` on every node the scalar ``root`` depends on.

        Gradients from a previous call are cleared first; nodes that ``root``
        does not reach keep ``grad = None``.
        """
        if root.tape is not self:
            raise ContractError("root node belongs to a different tape")
        if root.value.size != 1:
            raise ContractError(f"backward needs a scalar root, got shape {root.shape}")
        for node in self.nodes:
            node.grad = None
        root.grad = np.ones_like(root.value)
        for node in reversed(self.nodes[: root.id + 1]):
            if node.grad is None or node._backward is None or not node.requires_grad:
                continue
            for parent, g in zip(node.parents, node._backward(node.grad)):
                if g is None or not parent.requires_grad:
                    continue
                parent.grad = g if parent.grad is None else parent.grad + g


def _lift(tape, x):
    if isinstance(x, Node):
        return x
    return tape.constant(x)


def _same_tape(*nodes):
    tape = nodes[0].tape
    for n in nodes[1:]:
        if n.tape is not tape:
            raise ContractError("operands recorded on different tapes")
    return tape


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a, b, op):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------------------
# arithmetic


def add(a: Node, b: Node) -> Node:
    tape = _same_tape(a, b)
    _broadcast_shape(a, b, "add")
    sa, sb = a.shape, b.shape
    return tape._push(a.value + b.value, "add", (a, b),
                      lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a: Node, b: Node) -> Node:
    tape = _same_tape(a, b)
    _broadcast_shape(a, b, "sub")
    sa, sb = a.shape, b.shape
    return tape._push(a.value - b.value, "sub", (a, b),
                      lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a: Node, b: Node) -> Node:
    """Element-wise product with numpy broadcasting."""
    tape = _same_tape(a, b)
    _broadcast_shape(a, b, "mul")
    av, bv = a.value, b.value
    return tape._push(av * bv, "mul", (a, b),
                      lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)))


def hadamard(a: Node, b: Node) -> Node:
    """Element-wise product of two same-shape nodes."""
    if a.shape != b.shape:
        raise DimensionError(f"hadamard: shapes differ, {a.shape} vs {b.shape}")
    return mul(a, b)


def scale(a: Node, alpha: float) -> Node:
    return a.tape._push(a.value * alpha, "scale", (a,), lambda g: (g * alpha,))


def matmul(a: Node, b: Node) -> Node:
    """``a @ b`` for ``a`` of shape (..., p, q) and a matrix ``b`` of shape (q, r)."""
    tape = _same_tape(a, b)
    if a.ndim < 2 or b.ndim != 2 or a.shape[-1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    av, bv = a.value, b.value

    def backward(g):
        da = g @ bv.T
        if av.ndim == 2:
            db = av.T @ g
        else:
            db = av.reshape(-1, av.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return da, db

    return tape._push(av @ bv, "matmul", (a, b), backward)


# ---------------------------------------------------------------------------
# element-wise nonlinearities


def sigmoid(a: Node) -> Node:
    y = expit(a.value)
    return a.tape._push(y, "sigmoid", (a,), lambda g: (g * y * (1.0 - y),))


def tanh(a: Node) -> Node:
    y = np.tanh(a.value)
    return a.tape._push(y, "tanh", (a,), lambda g: (g * (1.0 - y * y),))


def relu(a: Node) -> Node:
    mask = a.value > 0
    return a.tape._push(np.where(mask, a.value, 0.0), "relu", (a,), lambda g: (g * mask,))


def identity(a: Node) -> Node:
    return a


_ACTIVATION_FNS = {"sigmoid": sigmoid, "tanh": tanh, "relu": relu, "identity": identity}


def elementwise(a: Node, kind: str) -> Node:
    """Apply one of :data:`ACTIVATIONS` element-wise."""
    try:
        fn = _ACTIVATION_FNS[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}") from None
    return fn(a)


def softmax(a: Node, axis: int = -1) -> Node:
    shifted = a.value - a.value.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return a.tape._push(y, "softmax", (a,), backward)


def weighted_bce_with_logits(logits: Node, labels, pos_weight) -> Node:
    """Per-element ``-[w z log s(x) + (1-z) log(1-s(x))]`` in stable form.

    ``labels`` and ``pos_weight`` are plain arrays (or scalars) broadcast
    against ``logits``; only ``logits`` receives a gradient.
    """
    x = logits.value
    z = np.broadcast_to(np.asarray(labels, dtype=np.float64), x.shape)
    w = np.broadcast_to(np.asarray(pos_weight, dtype=np.float64), x.shape)
    coef = w * z + (1.0 - z)
    # log(1 + e^-x) without overflow for large |x|
    loss = (1.0 - z) * x + coef * np.logaddexp(0.0, -x)

    def backward(g):
        s = expit(x)
        return (g * (w * z * (s - 1.0) + (1.0 - z) * s),)

    return logits.tape._push(loss, "weighted_bce", (logits,), backward)


# ---------------------------------------------------------------------------
# structural


def concat(nodes: Sequence[Node], axis: int = 0) -> Node:
    if not nodes:
        raise ContractError("concat of an empty list")
    tape = _same_tape(*nodes)
    ndim = nodes[0].ndim
    ax = axis % ndim if ndim else 0
    for n in nodes[1:]:
        if n.ndim != ndim or any(s != t for i, (s, t) in enumerate(zip(n.shape, nodes[0].shape)) if i != ax):
            raise DimensionError(
                f"concat axis {axis}: incompatible shapes {[m.shape for m in nodes]}")
    bounds = np.cumsum([0] + [n.shape[ax] for n in nodes])
    value = np.concatenate([n.value for n in nodes], axis=ax)

    def backward(g):
        index = [slice(None)] * g.ndim
        out = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            index[ax] = slice(lo, hi)
            out.append(g[tuple(index)])
        return out

    return tape._push(value, "concat", nodes, backward)


def slice_(a: Node, start: int, stop: int, axis: int = 0) -> Node:
    """Half-open slice ``[start, stop)`` along ``axis``; backward scatters into zeros."""
    if a.ndim == 0:
        raise DimensionError("slice of a scalar")
    ax = axis % a.ndim
    extent = a.shape[ax]
    if not 0 <= start <= stop <= extent:
        raise DimensionError(f"slice [{start}:{stop}) out of bounds for axis {axis} of extent {extent}")
    index = [slice(None)] * a.ndim
    index[ax] = slice(start, stop)
    index = tuple(index)
    shape = a.shape

    def backward(g):
        full = np.zeros(shape)
        full[index] = g
        return (full,)

    return a.tape._push(a.value[index], "slice", (a,), backward)


def reduce_sum(a: Node, axis=None, keepdims: bool = False) -> Node:
    shape = a.shape
    value = np.sum(a.value, axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return a.tape._push(np.asarray(value), "reduce_sum", (a,), backward)


def mean(a: Node) -> Node:
    return scale(reduce_sum(a), 1.0 / a.value.size)


def reshape(a: Node, shape) -> Node:
    old = a.shape
    try:
        value = a.value.reshape(shape)
    except ValueError:
        raise DimensionError(f"cannot reshape {old} to {shape}") from None
    return a.tape._push(value, "reshape", (a,), lambda g: (g.reshape(old),))


def transpose(a: Node) -> Node:
    """Swap the last two axes."""
    if a.ndim < 2:
        raise DimensionError(f"transpose needs at least 2 axes, got shape {a.shape}")
    return a.tape._push(np.swapaxes(a.value, -1, -2), "transpose", (a,),
                        lambda g: (np.swapaxes(g, -1, -2),))


def take_rows(table: Node, ids) -> Node:
    """Gather rows of a 2-D table; backward scatter-adds into the touched rows."""
    ids = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2:
        raise DimensionError(f"take_rows needs a 2-D table, got {table.shape}")
    shape = table.shape

    def backward(g):
        full = np.zeros(shape)
        np.add.at(full, ids, g)
        return (full,)

    return table.tape._push(table.value[ids], "take_rows", (table,), backward)
