"""Reverse-mode differentiation on a recorded tape.

Every primitive writes its vector-Jacobian product in terms of other
primitives, so a backward sweep can itself be recorded (``create_graph``).
That is what makes the training loss, which contains the input gradient of
the eigenfunction network, differentiable with respect to the weights.

Arrays are float64 numpy arrays; wider float types (``np.longdouble``) are
kept as given, which finite-difference checks use. Broadcasting is limited to what numpy does
for elementwise ops; the adjoint is reduced back with ``sum_to``.
"""
from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    pass


@dataclass
class Node:
    op: str
    inputs: tuple
    vjp: Callable | None  # None marks a leaf
    var: "Var"


class Tape:
    """Append-only list of recorded operations.

    Node ``i`` only ever depends on nodes ``< i``, so reverse index order is
    a valid reverse topological order.
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self.recording = True

    def __len__(self):
        return len(self.nodes)

    def leaf(self, value, name: str | None = None) -> "Var":
        v = Var(_floating(value, copy=True), self, len(self.nodes), name=name)
        self.nodes.append(Node("leaf", (), None, v))
        return v

    @contextmanager
    def paused(self, paused: bool = True):
        prev = self.recording
        self.recording = not paused and prev
        try:
            yield self
        finally:
            self.recording = prev


class Var:
    """A value, optionally tied to a node on a tape."""

    __slots__ = ("value", "tape", "index", "name")
    __array_ufunc__ = None  # make numpy defer to our reflected operators

    def __init__(self, value, tape: Tape | None = None, index: int | None = None, name=None):
        self.value = value
        self.tape = tape
        self.index = index
        self.name = name

    @property
    def tracked(self) -> bool:
        return self.index is not None

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        tag = f"#{self.index}" if self.tracked else "const"
        return f"Var({tag}, shape={self.value.shape})"

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

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, key):
        return getitem(self, key)

    @property
    def T(self):
        return transpose(self)


def _floating(x, copy=False) -> np.ndarray:
    arr = np.asarray(x)
    if arr.dtype.kind == "f" and arr.dtype.itemsize >= 8:
        return arr.copy() if copy else arr
    return np.array(arr, dtype=np.float64)


def as_var(x) -> Var:
    if isinstance(x, Var):
        return x
    return Var(_floating(x))


def _tape_of(inputs: Sequence[Var]) -> Tape | None:
    for v in inputs:
        if v.tracked and v.tape.recording:
            return v.tape
    return None


def _emit(op: str, value, inputs: Sequence[Var], vjp: Callable) -> Var:
    tape = _tape_of(inputs)
    if tape is None:
        return Var(value)
    out = Var(value, tape, len(tape.nodes))
    tape.nodes.append(Node(op, tuple(inputs), vjp, out))
    return out


# -- primitives ---------------------------------------------------------------


def _broadcast_shape(a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeError(f"incompatible shapes {a.shape} and {b.shape}") from exc


def add(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    _broadcast_shape(a, b)
    sa, sb = a.shape, b.shape
    return _emit("add", a.value + b.value, (a, b), lambda g: (sum_to(g, sa), sum_to(g, sb)))


def sub(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    _broadcast_shape(a, b)
    sa, sb = a.shape, b.shape
    return _emit("sub", a.value - b.value, (a, b), lambda g: (sum_to(g, sa), neg(sum_to(g, sb))))


def neg(a) -> Var:
    a = as_var(a)
    return _emit("neg", -a.value, (a,), lambda g: (neg(g),))


def mul(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    _broadcast_shape(a, b)
    sa, sb = a.shape, b.shape
    return _emit("mul", a.value * b.value, (a, b), lambda g: (sum_to(g * b, sa), sum_to(g * a, sb)))


def div(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    _broadcast_shape(a, b)
    sa, sb = a.shape, b.shape

    def vjp(g):
        ga = g / b
        return sum_to(ga, sa), sum_to(neg(ga * a / b), sb)

    return _emit("div", a.value / b.value, (a, b), vjp)


def square(a) -> Var:
    a = as_var(a)
    return _emit("square", a.value * a.value, (a,), lambda g: (g * a * 2.0,))


def sqrt(a) -> Var:
    a = as_var(a)
    out_value = np.sqrt(a.value)
    holder = {}

    def vjp(g):
        return (g / (holder["out"] * 2.0),)

    out = _emit("sqrt", out_value, (a,), vjp)
    holder["out"] = out
    return out


def sin(a) -> Var:
    a = as_var(a)
    return _emit("sin", np.sin(a.value), (a,), lambda g: (g * cos(a),))


def cos(a) -> Var:
    a = as_var(a)
    return _emit("cos", np.cos(a.value), (a,), lambda g: (neg(g * sin(a)),))


def exp(a) -> Var:
    a = as_var(a)
    holder = {}
    out = _emit("exp", np.exp(a.value), (a,), lambda g: (g * holder["out"],))
    holder["out"] = out
    return out


def relu(a) -> Var:
    # subgradient at 0 is 0
    a = as_var(a)
    mask = (a.value > 0).astype(np.float64)
    return _emit("relu", a.value * mask, (a,), lambda g: (g * mask,))


def clip(a, lo: float, hi: float) -> Var:
    """Clamp to ``[lo, hi]``; derivative 1 strictly inside, 0 elsewhere."""
    a = as_var(a)
    if not lo < hi:
        raise ValueError(f"clip needs lo < hi, got {lo}, {hi}")
    mask = ((a.value > lo) & (a.value < hi)).astype(np.float64)
    return _emit("clip", np.clip(a.value, lo, hi), (a,), lambda g: (g * mask,))


def matmul(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shapes {a.shape} @ {b.shape}")
    return _emit("matmul", a.value @ b.value, (a, b), lambda g: (g @ transpose(b), transpose(a) @ g))


def transpose(a) -> Var:
    a = as_var(a)
    if a.ndim != 2:
        raise ShapeError("transpose expects a 2-d value")
    return _emit("transpose", a.value.T, (a,), lambda g: (transpose(g),))


def sum(a, axis: int | None = None) -> Var:  # noqa: A001
    a = as_var(a)
    shape = a.shape
    if axis is None:
        value = np.asarray(a.value.sum())

        def vjp(g):
            return (broadcast_to(g, shape),)
    else:
        value = a.value.sum(axis=axis)

        def vjp(g):
            return (broadcast_to(expand_dims(g, axis), shape),)

    return _emit("sum", value, (a,), vjp)


def mean(a, axis: int | None = None) -> Var:
    a = as_var(a)
    n = a.value.size if axis is None else a.shape[axis]
    return sum(a, axis) * (1.0 / n)


def expand_dims(a, axis: int) -> Var:
    a = as_var(a)
    shape = a.shape
    return _emit("expand_dims", np.expand_dims(a.value, axis), (a,), lambda g: (reshape(g, shape),))


def reshape(a, shape) -> Var:
    a = as_var(a)
    old = a.shape
    return _emit("reshape", a.value.reshape(shape), (a,), lambda g: (reshape(g, old),))


def broadcast_to(a, shape) -> Var:
    a = as_var(a)
    old = a.shape
    value = np.broadcast_to(a.value, shape)
    return _emit("broadcast_to", value, (a,), lambda g: (sum_to(g, old),))


def sum_to(a, shape) -> Var:
    """Reduce a broadcast result back to ``shape`` (adjoint of broadcasting)."""
    a = as_var(a)
    shape = tuple(shape)
    if a.shape == shape:
        return a
    lead = a.ndim - len(shape)
    axes = tuple(range(lead)) + tuple(
        lead + i for i, s in enumerate(shape) if s == 1 and a.shape[lead + i] != 1
    )
    value = a.value.sum(axis=axes, keepdims=True).reshape(shape)
    old = a.shape
    return _emit("sum_to", value, (a,), lambda g: (broadcast_to(g, old),))


def getitem(a, key) -> Var:
    a = as_var(a)
    shape = a.shape
    return _emit("getitem", a.value[key], (a,), lambda g: (scatter(g, key, shape),))


def scatter(a, key, shape) -> Var:
    """Zeros of ``shape`` with ``a`` written at ``key`` (adjoint of getitem)."""
    a = as_var(a)
    value = np.zeros(shape)
    np.add.at(value, key, a.value)
    return _emit("scatter", value, (a,), lambda g: (getitem(g, key),))


def concat(parts: Sequence, axis: int = -1) -> Var:
    parts = [as_var(p) for p in parts]
    value = np.concatenate([p.value for p in parts], axis=axis)
    ax = axis % value.ndim
    bounds = np.cumsum([0] + [p.shape[ax] for p in parts])

    def vjp(g):
        out = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            key = [slice(None)] * value.ndim
            key[ax] = slice(int(lo), int(hi))
            out.append(getitem(g, tuple(key)))
        return tuple(out)

    return _emit("concat", value, parts, vjp)


PRIMITIVES = {
    "add": add,
    "sub": sub,
    "neg": neg,
    "mul": mul,
    "div": div,
    "square": square,
    "sqrt": sqrt,
    "sin": sin,
    "cos": cos,
    "exp": exp,
    "relu": relu,
    "clip": clip,
    "matmul": matmul,
    "transpose": transpose,
    "sum": sum,
    "concat": concat,
}


def record(tape: Tape, op: str, inputs: Sequence, **kwargs) -> Var:
    """Apply primitive ``op`` to ``inputs``, recording on ``tape``."""
    for v in inputs:
        if isinstance(v, Var) and v.tracked and v.tape is not tape:
            raise ValueError("input belongs to a different tape")
    fn = PRIMITIVES[op]
    if op == "concat":
        return fn(list(inputs), **kwargs)
    return fn(*inputs, **kwargs)


# -- sweeps -------------------------------------------------------------------


def _sweep(root: Var, create_graph: bool) -> dict[int, Var]:
    if not root.tracked:
        raise ValueError("root is not recorded on a tape")
    if root.value.size != 1:
        raise ShapeError(f"backward needs a scalar root, got shape {root.shape}")
    tape = root.tape
    nodes = tape.nodes
    adj: dict[int, Var] = {root.index: Var(np.ones_like(root.value))}
    leaves: dict[int, Var] = {}
    with tape.paused(not create_graph):
        for i in range(root.index, -1, -1):
            g = adj.pop(i, None)
            if g is None:
                continue
            node = nodes[i]
            if node.vjp is None:
                leaves[i] = g
                continue
            for inp, gi in zip(node.inputs, node.vjp(g)):
                if not inp.tracked or gi is None:
                    continue
                prev = adj.get(inp.index)
                adj[inp.index] = gi if prev is None else add(prev, gi)
    return leaves


def backward(root: Var, wrt: Sequence[Var] | None = None) -> dict:
    """Gradient of scalar ``root`` with respect to leaves.

    Returns ``{leaf: ndarray}``. With ``wrt`` given, every requested leaf is
    present (zeros when unreachable); otherwise only reachable leaves are.
    """
    found = _sweep(root, create_graph=False)
    nodes = root.tape.nodes
    if wrt is None:
        return {nodes[i].var: g.value for i, g in found.items()}
    out = {}
    for v in wrt:
        g = found.get(v.index)
        out[v] = np.zeros_like(v.value) if g is None else np.broadcast_to(g.value, v.shape).copy()
    return out


def input_gradient(output: Var, wrt_input: Var) -> Var:
    """d output / d wrt_input, recorded on the tape so it can be differentiated again."""
    if output.value.size != 1:
        raise ShapeError(f"input_gradient needs a scalar output, got shape {output.shape}")
    if not wrt_input.tracked or wrt_input.tape is not output.tape:
        raise ValueError("wrt_input must be a leaf of the output's tape")
    found = _sweep(output, create_graph=True)
    g = found.get(wrt_input.index)
    if g is None:
        return Var(np.zeros_like(wrt_input.value))
    return g
