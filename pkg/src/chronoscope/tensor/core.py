"""Dense float64 tensors with a global append-only tape for reverse-mode autodiff.

Every differentiable op computes its forward value with numpy and, when any
input requires a gradient and recording is enabled, appends a node to the
tape holding a closure that maps the output gradient to input gradients.
``backward`` walks the tape once in reverse insertion order.
"""
from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

DTYPE = np.float64

PRIMITIVES: dict[str, Callable] = {}

_debug = False


class ShapeError(ValueError):
    """Raised when operand shapes do not satisfy an op's shape algebra."""


def primitive(name: str):
    """Register a differentiable op under ``name`` (used for gradcheck coverage)."""

    def deco(fn):
        PRIMITIVES[name] = fn
        return fn

    return deco


def set_debug(flag: bool) -> None:
    """Toggle NaN/Inf checks on every forward result."""
    global _debug
    _debug = bool(flag)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "node_id", "name")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        arr = np.array(data, dtype=DTYPE)
        if arr.ndim > 0 and min(arr.shape) < 1:
            raise ShapeError(f"all dimensions must be >= 1, got {arr.shape}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.node_id: Optional[int] = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def __repr__(self) -> str:
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={list(self.shape)}, requires_grad={self.requires_grad}{tag})"

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)


@dataclass
class Node:
    op: str
    inputs: tuple[Tensor, ...]
    backward_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]
    output: Tensor


class Tape:
    """Append-only record of differentiable ops; insertion order is topological."""

    def __init__(self) -> None:
        self.nodes: list[Node] = []
        self.enabled = True

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, op: str, inputs: Sequence[Tensor], out: Tensor, backward_fn) -> None:
        nid = len(self.nodes)
        self.nodes.append(Node(op, tuple(inputs), backward_fn, out))
        out.node_id = nid
        out.requires_grad = True

    def clear(self) -> None:
        # outputs become detached constants so stale ids never alias new nodes
        for node in self.nodes:
            node.output.node_id = None
            node.output.requires_grad = False
        self.nodes = []


_tape = Tape()


def get_tape() -> Tape:
    return _tape


@contextmanager
def no_grad() -> Iterator[None]:
    prev = _tape.enabled
    _tape.enabled = False
    try:
        yield
    finally:
        _tape.enabled = prev


def _result(op: str, data: np.ndarray, inputs: Sequence[Tensor], backward_fn) -> Tensor:
    if _debug and not np.all(np.isfinite(data)):
        if all(np.all(np.isfinite(t.data)) for t in inputs):
            raise FloatingPointError(f"{op} produced non-finite values from finite inputs")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.requires_grad = False
    out.grad = None
    out.node_id = None
    out.name = None
    if _tape.enabled and any(t.requires_grad for t in inputs):
        _tape.record(op, inputs, out, backward_fn)
    return out


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every requires_grad leaf, then clear the tape."""
    if loss.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {list(loss.shape)}")
    try:
        if loss.node_id is None:
            if loss.requires_grad:
                _accumulate(loss, np.ones_like(loss.data))
            return
        grads: dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.data)}
        nodes = _tape.nodes
        for nid in range(loss.node_id, -1, -1):
            g = grads.pop(nid, None)
            if g is None:
                continue
            node = nodes[nid]
            for inp, ig in zip(node.inputs, node.backward_fn(g)):
                if ig is None or not inp.requires_grad:
                    continue
                if inp.node_id is None:
                    _accumulate(inp, ig)
                elif inp.node_id in grads:
                    grads[inp.node_id] = grads[inp.node_id] + ig
                else:
                    grads[inp.node_id] = ig
    finally:
        _tape.clear()


def _accumulate(leaf: Tensor, g: np.ndarray) -> None:
    g = np.asarray(g, dtype=DTYPE).reshape(leaf.shape)
    leaf.grad = g.copy() if leaf.grad is None else leaf.grad + g


def create(
    shape: Sequence[int],
    init: str = "zeros",
    *,
    value: float = 0.0,
    seed: Optional[int] = None,
    fan_in: Optional[int] = None,
    nonlinearity: str = "relu",
    requires_grad: bool = False,
    name: Optional[str] = None,
) -> Tensor:
    """Allocate a tensor filled with zeros, a constant (``init="full"``), or fan-in scaled normals.

    Normal init draws std ``sqrt(2/fan_in)`` ahead of a relu and ``sqrt(1/fan_in)``
    otherwise. ``fan_in`` defaults to the product of all but the leading dim
    (conv layout ``[out, in, *kernel]``), or the single dim for vectors.
    """
    shape = tuple(int(s) for s in shape)
    if len(shape) == 0 or any(s < 1 for s in shape):
        raise ShapeError(f"invalid shape {list(shape)}")
    if init == "zeros":
        data = np.zeros(shape, dtype=DTYPE)
    elif init == "full":
        data = np.full(shape, value, dtype=DTYPE)
    elif init == "normal":
        if seed is None:
            raise ValueError("normal init requires a seed")
        if fan_in is None:
            fan_in = shape[0] if len(shape) == 1 else math.prod(shape[1:])
        gain = 2.0 if nonlinearity == "relu" else 1.0
        std = math.sqrt(gain / fan_in)
        data = np.random.default_rng(seed).standard_normal(shape) * std
    else:
        raise ValueError(f"unknown init {init!r}")
    return Tensor(data, requires_grad=requires_grad, name=name)


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {list(a.shape)} and {list(b.shape)} differ (no broadcasting)")


@primitive("add")
def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return _result("add", a.data + b.data, (a, b), lambda g: (g, g))


@primitive("sub")
def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    return _result("sub", a.data - b.data, (a, b), lambda g: (g, -g))


@primitive("mul")
def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("mul", a, b)
    ad, bd = a.data, b.data
    return _result("mul", ad * bd, (a, b), lambda g: (g * bd, g * ad))


@primitive("scale")
def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _result("scale", a.data * c, (a,), lambda g: (g * c,))


@primitive("matmul")
def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {list(a.shape)} by {list(b.shape)}")
    ad, bd = a.data, b.data
    return _result("matmul", ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


@primitive("add_bias")
def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Add a per-channel bias ``b[C]`` along axis 1 of ``x[N, C, ...]``."""
    if x.ndim < 2 or b.ndim != 1 or x.shape[1] != b.shape[0]:
        raise ShapeError(f"add_bias: bias {list(b.shape)} does not match axis 1 of {list(x.shape)}")
    view = (1, -1) + (1,) * (x.ndim - 2)
    sum_axes = (0,) + tuple(range(2, x.ndim))
    return _result("add_bias", x.data + b.data.reshape(view), (x, b), lambda g: (g, g.sum(axis=sum_axes)))


@primitive("sum")
def sum_all(x: Tensor) -> Tensor:
    shape = x.shape
    return _result("sum", np.array(x.data.sum()), (x,), lambda g: (np.full(shape, float(g)),))


@primitive("reshape")
def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    old = x.shape
    try:
        data = x.data.reshape(tuple(shape))
    except ValueError as exc:
        raise ShapeError(f"reshape: {list(old)} -> {list(shape)}: {exc}") from None
    return _result("reshape", data, (x,), lambda g: (g.reshape(old),))


def flatten(x: Tensor) -> Tensor:
    return reshape(x, (x.shape[0], -1))


@primitive("take")
def take(x: Tensor, index: int, axis: int = 1) -> Tensor:
    """Select one position along ``axis``, dropping that axis."""
    if not 0 <= index < x.shape[axis]:
        raise ShapeError(f"take: index {index} out of range for axis {axis} of {list(x.shape)}")
    shape = x.shape

    def bw(g):
        out = np.zeros(shape, dtype=DTYPE)
        idx = [slice(None)] * len(shape)
        idx[axis] = index
        out[tuple(idx)] = g
        return (out,)

    return _result("take", np.take(x.data, index, axis=axis), (x,), bw)


@primitive("slice")
def slice_axis(x: Tensor, start: int, stop: int, axis: int = 1) -> Tensor:
    if not 0 <= start < stop <= x.shape[axis]:
        raise ShapeError(f"slice: [{start}:{stop}] invalid for axis {axis} of {list(x.shape)}")
    shape = x.shape
    idx = [slice(None)] * len(shape)
    idx[axis] = slice(start, stop)
    idx = tuple(idx)

    def bw(g):
        out = np.zeros(shape, dtype=DTYPE)
        out[idx] = g
        return (out,)

    return _result("slice", x.data[idx], (x,), bw)


@primitive("concat")
def concat(xs: Sequence[Tensor], axis: int = 1) -> Tensor:
    xs = list(xs)
    if not xs:
        raise ShapeError("concat: empty input list")
    ref = xs[0].shape
    for t in xs[1:]:
        if t.ndim != len(ref) or any(
            a != b for i, (a, b) in enumerate(zip(t.shape, ref)) if i != axis
        ):
            raise ShapeError(f"concat: {list(t.shape)} incompatible with {list(ref)} along axis {axis}")
    bounds = np.cumsum([t.shape[axis] for t in xs])[:-1]
    return _result(
        "concat",
        np.concatenate([t.data for t in xs], axis=axis),
        xs,
        lambda g: np.split(g, bounds, axis=axis),
    )


def concat_channels(xs: Sequence[Tensor]) -> Tensor:
    """Concatenate ``[N, Ci, ...]`` tensors along the channel axis in argument order."""
    xs = list(xs)
    if len(xs) == 1:
        return xs[0]
    return concat(xs, axis=1)


@primitive("stack")
def stack(xs: Sequence[Tensor], axis: int = 1) -> Tensor:
    xs = list(xs)
    for t in xs[1:]:
        _same_shape("stack", xs[0], t)
    n = len(xs)
    return _result(
        "stack",
        np.stack([t.data for t in xs], axis=axis),
        xs,
        lambda g: [np.take(g, i, axis=axis) for i in range(n)],
    )


@primitive("sorted_mean")
def sorted_mean(x: Tensor, axis: int = 1) -> Tensor:
    """Mean along ``axis`` whose result is bitwise invariant to permutations along it.

    Values are sorted before summation so the float rounding sequence does not
    depend on input order.
    """
    n = x.shape[axis]
    shape = x.shape
    data = np.sort(x.data, axis=axis).sum(axis=axis) / n

    def bw(g):
        return (np.broadcast_to(np.expand_dims(g, axis), shape) / n,)

    return _result("sorted_mean", data, (x,), bw)


@primitive("permute")
def permute(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"permute: {axes} is not a permutation of {x.ndim} axes")
    inv = tuple(np.argsort(axes))
    return _result("permute", np.ascontiguousarray(x.data.transpose(axes)), (x,), lambda g: (g.transpose(inv),))
