"""Functional forward passes of the frame CNN, the three encoder families and the heads.

Every function takes its parameters explicitly so tests can swap them, and
every shape it expects is checked up front.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from ..tensor import (
    LayerParams,
    ShapeError,
    Tensor,
    add,
    add_bias,
    batchnorm,
    concat_channels,
    conv2d,
    conv3d,
    create,
    dropout,
    flatten,
    global_avg_pool,
    linear,
    matmul,
    max_pool2d,
    max_pool3d,
    mul,
    permute,
    relu,
    reshape,
    sigmoid,
    slice_axis,
    take,
    tanh,
)


@dataclass
class RecurrentParams:
    """Shared transition parameters: ``W[d, g*H]``, ``U[H, g*H]``, ``b[g*H]``."""

    W: Tensor
    U: Tensor
    b: Tensor

    def tensors(self) -> dict[str, Tensor]:
        return {"W": self.W, "U": self.U, "b": self.b}


def make_recurrent(d: int, hidden: int, gates: int, seed_w: int, seed_u: int) -> RecurrentParams:
    W = create((d, gates * hidden), "normal", seed=seed_w, fan_in=d, nonlinearity="linear", requires_grad=True)
    U = create((hidden, gates * hidden), "normal", seed=seed_u, fan_in=hidden, nonlinearity="linear",
               requires_grad=True)
    b = create((gates * hidden,), requires_grad=True)
    if gates == 4:
        # forget gate starts open
        b.data[hidden:2 * hidden] = 1.0
    return RecurrentParams(W, U, b)


def frame_cnn(x: Tensor, convs: Sequence[LayerParams]) -> tuple[Tensor, Tensor]:
    """Encode frames ``[N, C, H, W]`` into a conv map ``[N, F, H/4, W/4]`` and its pooled vector ``[N, F]``."""
    if x.ndim != 4:
        raise ShapeError(f"frame_cnn: expected [N, C, H, W], got {list(x.shape)}")
    c1, c2, c3 = convs
    pad = c1.weight.shape[-1] // 2
    h = max_pool2d(relu(conv2d(x, c1, padding=pad)), 2)
    h = max_pool2d(relu(conv2d(h, c2, padding=pad)), 2)
    fmap = relu(conv2d(h, c3, padding=pad))
    return fmap, global_avg_pool(fmap)


def rnn_step(x_t: Tensor, h_prev: Tensor, p: RecurrentParams) -> Tensor:
    """``h_t = tanh(x_t W + h_prev U + b)``."""
    if x_t.ndim != 2 or x_t.shape[1] != p.W.shape[0] or h_prev.shape != (x_t.shape[0], p.U.shape[0]):
        raise ShapeError(f"rnn_step: x {list(x_t.shape)}, h {list(h_prev.shape)} do not match params")
    return tanh(add_bias(add(matmul(x_t, p.W), matmul(h_prev, p.U)), p.b))


def lstm_cell(x_t: Tensor, h_prev: Tensor, c_prev: Tensor, p: RecurrentParams) -> tuple[Tensor, Tensor]:
    """One LSTM step with gate blocks ordered input, forget, candidate, output."""
    hidden = p.U.shape[0]
    if x_t.ndim != 2 or x_t.shape[1] != p.W.shape[0] or h_prev.shape != (x_t.shape[0], hidden):
        raise ShapeError(f"lstm_cell: x {list(x_t.shape)}, h {list(h_prev.shape)} do not match params")
    z = add_bias(add(matmul(x_t, p.W), matmul(h_prev, p.U)), p.b)
    i = sigmoid(slice_axis(z, 0, hidden))
    f = sigmoid(slice_axis(z, hidden, 2 * hidden))
    g = tanh(slice_axis(z, 2 * hidden, 3 * hidden))
    o = sigmoid(slice_axis(z, 3 * hidden, 4 * hidden))
    c = add(mul(f, c_prev), mul(i, g))
    return mul(o, tanh(c)), c


def rnn_forward(frames: Tensor, p: RecurrentParams) -> Tensor:
    """Run the vanilla recurrence over ``frames[N, T, d]`` from a zero state; return ``h_T``."""
    if frames.ndim != 3:
        raise ShapeError(f"rnn_forward: expected [N, T, d], got {list(frames.shape)}")
    h = create((frames.shape[0], p.U.shape[0]))
    for t in range(frames.shape[1]):
        h = rnn_step(take(frames, t, axis=1), h, p)
    return h


def lstm_forward(frames: Tensor, p: RecurrentParams) -> Tensor:
    """Run the LSTM over ``frames[N, T, d]`` from zero states; return ``h_T``."""
    if frames.ndim != 3:
        raise ShapeError(f"lstm_forward: expected [N, T, d], got {list(frames.shape)}")
    n, hidden = frames.shape[0], p.U.shape[0]
    h = create((n, hidden))
    c = create((n, hidden))
    for t in range(frames.shape[1]):
        h, c = lstm_cell(take(frames, t, axis=1), h, c, p)
    return h


def hier_forward(clip: Tensor, convs: Sequence[LayerParams]) -> Tensor:
    """C3D-style stack on ``clip[N, C, T, H, W]``: two conv3d-relu-pool blocks and a final conv3d, flattened."""
    if clip.ndim != 5:
        raise ShapeError(f"hier_forward: expected [N, C, T, H, W], got {list(clip.shape)}")
    pad = convs[0].weight.shape[-1] // 2
    h = clip
    for layer in convs[:-1]:
        h = relu(conv3d(h, layer, padding=pad))
        if h.shape[2] < 2:
            raise ShapeError(f"hier_forward: temporal extent {h.shape[2]} too small for the pooling stack")
        h = max_pool3d(h, (2, 2, 2))
    h = relu(conv3d(h, convs[-1], padding=pad))
    return flatten(h)


def tad_step(
    t: int,
    inputs: Sequence[Tensor],
    bn: LayerParams,
    conv: LayerParams,
    mode: str = "train",
    rate: float = 0.0,
    seed: int = 0,
) -> Tensor:
    """Dense time step ``t`` (1-based): ``inputs`` is ``[h_1, ..., h_{t-1}, x_t]``.

    Returns ``DropOut(Conv2D(ReLU(BatchNorm(concat(inputs)))))`` with ``K`` maps.
    """
    if len(inputs) != t:
        raise ValueError(f"tad_step: step {t} needs {t} inputs (history + frame), got {len(inputs)}")
    fa = concat_channels(inputs)
    h = relu(batchnorm(fa, bn, mode))
    h = conv2d(h, conv, padding=conv.weight.shape[-1] // 2)
    return dropout(h, rate, mode, seed)


def tad_forward(
    frame_maps: Tensor,
    steps: Sequence[tuple[LayerParams, LayerParams]],
    mode: str = "train",
    rate: float = 0.0,
    seed: int = 0,
) -> tuple[Tensor, list[Tensor]]:
    """Dense causal encoder over per-frame maps ``[N, T, F, h, w]``.

    Step ``t`` sees only ``h_1..h_{t-1}`` and ``x_t``. Returns the
    ``[N, K*T, h, w]`` concatenation of all states and the state list.
    """
    if frame_maps.ndim != 5:
        raise ShapeError(f"tad_forward: expected [N, T, F, h, w], got {list(frame_maps.shape)}")
    if frame_maps.shape[1] != len(steps):
        raise ValueError(f"tad_forward: got {frame_maps.shape[1]} frames for {len(steps)} steps")
    states: list[Tensor] = []
    for t, (bn, conv) in enumerate(steps, start=1):
        x_t = take(frame_maps, t - 1, axis=1)
        states.append(tad_step(t, states + [x_t], bn, conv, mode, rate, seed * 1009 + t))
    return concat_channels(states), states


def classifier_head(
    encoding: Tensor, fc: LayerParams, bn: LayerParams | None = None, mode: str = "train"
) -> tuple[Tensor, Tensor]:
    """Map encodings go BN, ReLU, 2x2 max-pool, flatten; vectors go straight in. Returns (features, logits)."""
    if encoding.ndim == 4:
        if bn is None:
            raise ValueError("classifier_head: map encodings need batch-norm params")
        feats = flatten(max_pool2d(relu(batchnorm(encoding, bn, mode)), 2))
    elif encoding.ndim == 2:
        feats = encoding
    else:
        raise ShapeError(f"classifier_head: unsupported encoding shape {list(encoding.shape)}")
    if feats.shape[1] != fc.weight.shape[0]:
        raise ShapeError(f"classifier_head: {feats.shape[1]} features for fc expecting {fc.weight.shape[0]}")
    return feats, linear(feats, fc)


def frames_to_batch(x: Tensor) -> Tensor:
    """``[N, T, C, H, W] -> [N*T, C, H, W]``."""
    n, t = x.shape[:2]
    return reshape(x, (n * t,) + x.shape[2:])


def to_channels_first(x: Tensor) -> Tensor:
    """``[N, T, C, H, W] -> [N, C, T, H, W]``."""
    return permute(x, (0, 2, 1, 3, 4))
