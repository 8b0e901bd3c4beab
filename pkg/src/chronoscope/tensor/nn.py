"""Neural-network primitives on top of the tape: conv, batch-norm, pooling, dropout, loss."""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import DTYPE, ShapeError, Tensor, _result, add_bias, create, matmul, primitive

logger = logging.getLogger(__name__)

BN_EPS = 1e-5
BN_MOMENTUM = 0.1

# Local derivatives keyed by activation kind, looked up at backward time.
# Signature: (input, output) -> d output / d input.
LOCAL_DERIVATIVES = {
    "relu": lambda x, y: (x > 0).astype(DTYPE),
    "sigmoid": lambda x, y: y * (1.0 - y),
    "tanh": lambda x, y: 1.0 - y * y,
}


@dataclass
class LayerParams:
    """Learnable tensors for one layer plus batch-norm running statistics.

    Running stats stay ``None`` until the first train-mode batch-norm call.
    """

    weight: Optional[Tensor] = None
    bias: Optional[Tensor] = None
    scale: Optional[Tensor] = None
    shift: Optional[Tensor] = None
    running_mean: Optional[np.ndarray] = None
    running_var: Optional[np.ndarray] = None
    momentum: float = BN_MOMENTUM
    eps: float = BN_EPS
    frozen: bool = field(default=False, repr=False)

    @classmethod
    def conv(cls, cin: int, cout: int, kernel: Sequence[int], seed: int, relu: bool = True) -> "LayerParams":
        kernel = tuple(kernel)
        w = create((cout, cin) + kernel, "normal", seed=seed, nonlinearity="relu" if relu else "linear",
                   requires_grad=True)
        return cls(weight=w, bias=create((cout,), requires_grad=True))

    @classmethod
    def linear(cls, din: int, dout: int, seed: int, relu: bool = False) -> "LayerParams":
        w = create((din, dout), "normal", seed=seed, fan_in=din, nonlinearity="relu" if relu else "linear",
                   requires_grad=True)
        return cls(weight=w, bias=create((dout,), requires_grad=True))

    @classmethod
    def batchnorm(cls, channels: int) -> "LayerParams":
        return cls(scale=create((channels,), "full", value=1.0, requires_grad=True),
                   shift=create((channels,), requires_grad=True))

    def tensors(self) -> dict[str, Tensor]:
        """Learnable tensors in a fixed order."""
        out = {}
        for key in ("weight", "bias", "scale", "shift"):
            t = getattr(self, key)
            if t is not None:
                out[key] = t
        return out

    def buffers(self) -> dict[str, np.ndarray]:
        out = {}
        if self.running_mean is not None:
            out["running_mean"] = self.running_mean
            out["running_var"] = self.running_var
        return out

    def num_params(self) -> int:
        return sum(t.size for t in self.tensors().values())


def _conv_out_size(op: str, in_size: int, k: int, stride: int, padding: int) -> int:
    span = in_size + 2 * padding - k
    if span < 0:
        raise ShapeError(f"{op}: kernel {k} larger than padded input {in_size + 2 * padding}")
    if span % stride:
        raise ShapeError(f"{op}: ({in_size}+2*{padding}-{k})/{stride} is not integral")
    return span // stride + 1


def _conv_nd(op: str, x: Tensor, p: LayerParams, stride: int, padding: int, nd: int) -> Tensor:
    w = p.weight
    if x.ndim != nd + 2 or w.ndim != nd + 2:
        raise ShapeError(f"{op}: expected {nd + 2}-d input and weight, got {list(x.shape)}, {list(w.shape)}")
    n, cin = x.shape[:2]
    cout = w.shape[0]
    if w.shape[1] != cin:
        raise ShapeError(f"{op}: weight expects {w.shape[1]} input channels, got {cin}")
    ksize = w.shape[2:]
    out_size = tuple(_conv_out_size(op, s, k, stride, padding) for s, k in zip(x.shape[2:], ksize))
    xp = np.pad(x.data, ((0, 0), (0, 0)) + ((padding, padding),) * nd) if padding else x.data
    spatial = tuple(range(2, 2 + nd))
    win = sliding_window_view(xp, ksize, axis=spatial)
    if stride != 1:
        win = win[(slice(None), slice(None)) + (slice(None, None, stride),) * nd]
    # [N, C, *O, *K] -> columns [C*prod(K), N*prod(O)] so each pass is a single GEMM
    perm = (1,) + tuple(range(2 + nd, 2 + 2 * nd)) + (0,) + spatial
    cols = np.ascontiguousarray(win.transpose(perm)).reshape(cin * math.prod(ksize), -1)
    wmat = w.data.reshape(cout, -1)
    out = wmat @ cols
    if p.bias is not None:
        out += p.bias.data[:, None]
    out = np.ascontiguousarray(np.moveaxis(out.reshape((cout, n) + out_size), 0, 1))
    xp_shape = xp.shape

    def bw(g):
        g2 = np.ascontiguousarray(np.moveaxis(g, 1, 0)).reshape(cout, -1)
        dw = (g2 @ cols.T).reshape(w.shape)
        db = g2.sum(axis=1)
        dcols = (wmat.T @ g2).reshape((cin,) + ksize + (n,) + out_size)
        # scatter in [C, N, *S] layout, then swap back
        dxp = np.zeros((xp_shape[1], xp_shape[0]) + xp_shape[2:], dtype=DTYPE)
        for offs in itertools.product(*(range(k) for k in ksize)):
            idx = (slice(None), slice(None)) + tuple(
                slice(o, o + stride * (s - 1) + 1, stride) for o, s in zip(offs, out_size)
            )
            dxp[idx] += dcols[(slice(None),) + offs]
        dxp = np.moveaxis(dxp, 0, 1)
        if padding:
            dxp = dxp[(slice(None), slice(None)) + (slice(padding, -padding),) * nd]
        return (dxp, dw, db) if p.bias is not None else (dxp, dw)

    inputs = (x, w, p.bias) if p.bias is not None else (x, w)
    return _result(op, out, inputs, bw)


@primitive("conv2d")
def conv2d(x: Tensor, p: LayerParams, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of ``x[N, Cin, H, W]`` with ``p.weight[Cout, Cin, kh, kw]`` plus bias."""
    return _conv_nd("conv2d", x, p, stride, padding, 2)


@primitive("conv3d")
def conv3d(x: Tensor, p: LayerParams, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation over ``x[N, Cin, T, H, W]`` with a ``[Cout, Cin, kt, kh, kw]`` kernel."""
    return _conv_nd("conv3d", x, p, stride, padding, 3)


def linear(x: Tensor, p: LayerParams) -> Tensor:
    return add_bias(matmul(x, p.weight), p.bias)


_warned = {"bn_eval": False}


@primitive("batchnorm")
def batchnorm(x: Tensor, p: LayerParams, mode: str = "train") -> Tensor:
    """Per-channel normalization over every axis except 1.

    Train mode uses batch statistics and updates the running estimates (unless
    ``p.frozen``); eval mode is a pure affine map through the running estimates.
    """
    if x.ndim < 2:
        raise ShapeError(f"batchnorm: need [N, C, ...], got {list(x.shape)}")
    c = x.shape[1]
    if p.scale is None or p.scale.shape != (c,) or p.shift.shape != (c,):
        raise ShapeError(f"batchnorm: params do not match {c} channels")
    axes = (0,) + tuple(range(2, x.ndim))
    view = (1, c) + (1,) * (x.ndim - 2)
    count = x.size // c
    gamma = p.scale.data.reshape(view)
    if mode == "train":
        if count < 2:
            raise ValueError("batchnorm: train mode needs at least 2 samples per channel")
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        if not p.frozen:
            if p.running_mean is None:
                p.running_mean = np.zeros(c, dtype=DTYPE)
                p.running_var = np.ones(c, dtype=DTYPE)
            m = p.momentum
            p.running_mean = (1 - m) * p.running_mean + m * mean
            p.running_var = (1 - m) * p.running_var + m * var * count / (count - 1)
    elif mode == "eval":
        if p.running_mean is None:
            if not _warned["bn_eval"]:
                _warned["bn_eval"] = True
                logger.warning("batchnorm: eval before any train step; using mean 0, var 1")
            mean, var = np.zeros(c, dtype=DTYPE), np.ones(c, dtype=DTYPE)
        else:
            mean, var = p.running_mean, p.running_var
    else:
        raise ValueError(f"batchnorm: unknown mode {mode!r}")
    inv_std = 1.0 / np.sqrt(var + p.eps)
    xhat = (x.data - mean.reshape(view)) * inv_std.reshape(view)
    out = xhat * gamma + p.shift.data.reshape(view)

    def bw(g):
        dgamma = (g * xhat).sum(axis=axes)
        dbeta = g.sum(axis=axes)
        dxhat = g * gamma
        if mode == "train":
            dx = (inv_std.reshape(view) / count) * (
                count * dxhat
                - dxhat.sum(axis=axes).reshape(view)
                - xhat * (dxhat * xhat).sum(axis=axes).reshape(view)
            )
        else:
            dx = dxhat * inv_std.reshape(view)
        return dx, dgamma, dbeta

    return _result("batchnorm", out, (x, p.scale, p.shift), bw)


def _activation(kind: str, x: Tensor, y: np.ndarray) -> Tensor:
    xd = x.data
    return _result(kind, y, (x,), lambda g: (g * LOCAL_DERIVATIVES[kind](xd, y),))


@primitive("relu")
def relu(x: Tensor) -> Tensor:
    return _activation("relu", x, np.maximum(x.data, 0.0))


@primitive("sigmoid")
def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    # split by sign to avoid overflow in exp
    e = np.exp(-np.abs(d))
    y = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _activation("sigmoid", x, y)


@primitive("tanh")
def tanh(x: Tensor) -> Tensor:
    return _activation("tanh", x, np.tanh(x.data))


_ACTIVATIONS = {"relu": relu, "sigmoid": sigmoid, "tanh": tanh}


def activation(x: Tensor, kind: str) -> Tensor:
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}") from None
    return fn(x)


def _max_pool_nd(op: str, x: Tensor, kernel: Sequence[int], stride: Sequence[int]) -> Tensor:
    nd = len(kernel)
    if x.ndim != nd + 2:
        raise ShapeError(f"{op}: expected {nd + 2}-d input, got {list(x.shape)}")
    for s, k in zip(x.shape[2:], kernel):
        if k > s:
            raise ShapeError(f"{op}: window {tuple(kernel)} larger than input {list(x.shape[2:])}")
    out_size = tuple((s - k) // st + 1 for s, k, st in zip(x.shape[2:], kernel, stride))
    if tuple(kernel) == tuple(stride):
        return _max_pool_tiled(op, x, tuple(kernel), out_size)
    spatial = tuple(range(2, 2 + nd))
    win = sliding_window_view(x.data, tuple(kernel), axis=spatial)
    win = win[(slice(None), slice(None)) + tuple(slice(0, st * (o - 1) + 1, st) for st, o in zip(stride, out_size))]
    flat = win.reshape(win.shape[: 2 + nd] + (-1,))
    # argmax returns the first maximum in row-major window order
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    shape = x.shape

    def bw(g):
        dx = np.zeros(shape, dtype=DTYPE)
        for flat_idx, offs in enumerate(itertools.product(*(range(k) for k in kernel))):
            idx = (slice(None), slice(None)) + tuple(
                slice(o, o + st * (s - 1) + 1, st) for o, st, s in zip(offs, stride, out_size)
            )
            dx[idx] += np.where(arg == flat_idx, g, 0.0)
        return (dx,)

    return _result(op, out, (x,), bw)


def _max_pool_tiled(op: str, x: Tensor, kernel: tuple[int, ...], out_size: tuple[int, ...]) -> Tensor:
    """Non-overlapping windows: reshape into tiles instead of gathering sliding windows."""
    nd = len(kernel)
    n, c = x.shape[:2]
    crop = (slice(None), slice(None)) + tuple(slice(0, o * k) for o, k in zip(out_size, kernel))
    xc = x.data[crop]
    tiled_shape = (n, c) + tuple(v for o, k in zip(out_size, kernel) for v in (o, k))
    # [N, C, O1, K1, O2, K2, ...] -> [N, C, O1, O2, ..., K1, K2, ...]
    perm = (0, 1) + tuple(2 + 2 * i for i in range(nd)) + tuple(3 + 2 * i for i in range(nd))
    tiles = xc.reshape(tiled_shape).transpose(perm).reshape((n, c) + out_size + (-1,))
    arg = tiles.argmax(axis=-1)
    out = np.take_along_axis(tiles, arg[..., None], axis=-1)[..., 0]
    shape = x.shape
    kvol = math.prod(kernel)

    def bw(g):
        onehot = (arg[..., None] == np.arange(kvol)) * g[..., None]
        inv = np.argsort(perm)
        back = onehot.reshape((n, c) + out_size + kernel).transpose(inv).reshape(xc.shape)
        if back.shape == shape:
            return (back,)
        dx = np.zeros(shape, dtype=DTYPE)
        dx[crop] = back
        return (dx,)

    return _result(op, out, (x,), bw)


@primitive("max_pool2d")
def max_pool2d(x: Tensor, k: int = 2, s: Optional[int] = None) -> Tensor:
    s = k if s is None else s
    return _max_pool_nd("max_pool2d", x, (k, k), (s, s))


@primitive("max_pool3d")
def max_pool3d(x: Tensor, k: Sequence[int] = (2, 2, 2), s: Optional[Sequence[int]] = None) -> Tensor:
    k = tuple(k)
    s = k if s is None else tuple(s)
    return _max_pool_nd("max_pool3d", x, k, s)


@primitive("global_avg_pool")
def global_avg_pool(x: Tensor) -> Tensor:
    """Average every axis past the channel axis: ``[N, C, ...] -> [N, C]``."""
    if x.ndim < 3:
        raise ShapeError(f"global_avg_pool: need spatial axes, got {list(x.shape)}")
    axes = tuple(range(2, x.ndim))
    n = math.prod(x.shape[2:])
    shape = x.shape
    out = x.data.mean(axis=axes)

    def bw(g):
        return (np.broadcast_to(g.reshape(g.shape + (1,) * len(axes)), shape) / n,)

    return _result("global_avg_pool", out, (x,), bw)


def pool(x: Tensor, kind: str, k: int = 2, s: Optional[int] = None) -> Tensor:
    if kind == "max2d":
        return max_pool2d(x, k, s)
    if kind == "global_avg":
        return global_avg_pool(x)
    raise ValueError(f"unknown pool kind {kind!r}")


@primitive("dropout")
def dropout(x: Tensor, rate: float, mode: str = "train", seed: int = 0) -> Tensor:
    """Inverted dropout; the keep-mask is a pure function of ``seed`` and the shape."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if mode == "eval" or rate == 0.0:
        return x
    if mode != "train":
        raise ValueError(f"dropout: unknown mode {mode!r}")
    keep = np.random.default_rng(seed).random(x.shape) >= rate
    mult = keep / (1.0 - rate)
    return _result("dropout", x.data * mult, (x,), lambda g: (g * mult,))


@primitive("softmax_cross_entropy")
def softmax_cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean negative log-likelihood of integer ``targets`` under row-wise softmax."""
    if logits.ndim != 2:
        raise ShapeError(f"softmax_cross_entropy: logits must be [N, C], got {list(logits.shape)}")
    n, c = logits.shape
    t = np.asarray(targets, dtype=np.int64).reshape(-1)
    if t.shape[0] != n:
        raise ShapeError(f"softmax_cross_entropy: {t.shape[0]} targets for {n} rows")
    if np.any(t < 0) or np.any(t >= c):
        raise ValueError(f"softmax_cross_entropy: targets must lie in [0, {c})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    logp = z - logsum[:, None]
    rows = np.arange(n)
    loss = -logp[rows, t].mean()

    def bw(g):
        d = np.exp(logp)
        d[rows, t] -= 1.0
        return (d * (float(g) / n),)

    return _result("softmax_cross_entropy", np.array(loss), (logits,), bw)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))
