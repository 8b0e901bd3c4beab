"""A complete video classifier: frame CNN (where used), one encoder family, and a head."""
from __future__ import annotations

import hashlib
from typing import Optional, Union

import numpy as np

from ..tensor import LayerParams, ShapeError, Tensor, flatten, sorted_mean, stack, take
from . import layers
from .layers import RecurrentParams, make_recurrent
from .spec import EncoderSpec, sub_seed

ArrayLike = Union[np.ndarray, Tensor]


def content_order(frames: np.ndarray) -> list[int]:
    """Frame indices sorted by a hash of each frame's bytes (destroys temporal order)."""
    keys = [hashlib.blake2b(np.ascontiguousarray(f).tobytes(), digest_size=16).digest() for f in frames]
    return sorted(range(len(keys)), key=lambda i: (keys[i], i))


class VideoModel:
    """Parameters and forward pass for one :class:`EncoderSpec`.

    Input clips are ``[N, T, C, H, W]``. ``forward`` returns logits
    ``[N, num_classes]``; ``features`` also returns the head input (the
    embedding exported for visualisation).
    """

    def __init__(self, spec: EncoderSpec, seed: int = 0):
        self.spec = spec
        self.seed = int(seed)
        s = spec
        k = s.kernel
        self.frame_convs: list[LayerParams] = []
        if s.family != "hierarchical":
            cin = s.in_channels
            for i, cout in enumerate(s.base_channels, start=1):
                self.frame_convs.append(LayerParams.conv(cin, cout, (k, k), sub_seed(seed, f"frame.conv{i}")))
                cin = cout
        self.recurrent: Optional[RecurrentParams] = None
        self.hier_convs: list[LayerParams] = []
        self.tad_steps: list[tuple[LayerParams, LayerParams]] = []
        self.head_bn: Optional[LayerParams] = None
        d = s.vector_dim
        if s.family == "sequential":
            gates = 4 if s.cell == "lstm" else 1
            self.recurrent = make_recurrent(d, s.hidden, gates, sub_seed(seed, "seq.W"), sub_seed(seed, "seq.U"))
            head_in = s.hidden
        elif s.family == "hierarchical":
            cin = s.in_channels
            for i, cout in enumerate(s.hier_channels, start=1):
                self.hier_convs.append(LayerParams.conv(cin, cout, (k, k, k), sub_seed(seed, f"hier.conv{i}")))
                cin = cout
            head_in = s.hier_dim
        elif s.family == "time_aligned":
            for t in range(1, s.T + 1):
                cin = s.feature_dim + (t - 1) * s.K
                bn = LayerParams.batchnorm(cin)
                conv = LayerParams.conv(cin, s.K, (k, k), sub_seed(seed, f"tad.step{t}.conv"))
                self.tad_steps.append((bn, conv))
            self.head_bn = LayerParams.batchnorm(s.K * s.T)
            head_in = s.K * s.T * (s.map_size // 2) ** 2
        else:
            head_in = d
        self.fc = LayerParams.linear(head_in, s.num_classes, sub_seed(seed, "head.fc"))

    def layer_params(self) -> dict[str, Union[LayerParams, RecurrentParams]]:
        """Every parameter group, keyed by a stable dotted name, in registration order."""
        out: dict = {}
        for i, p in enumerate(self.frame_convs, start=1):
            out[f"frame.conv{i}"] = p
        if self.recurrent is not None:
            out[f"seq.{self.spec.cell}"] = self.recurrent
        for i, p in enumerate(self.hier_convs, start=1):
            out[f"hier.conv{i}"] = p
        for t, (bn, conv) in enumerate(self.tad_steps, start=1):
            out[f"tad.step{t}.bn"] = bn
            out[f"tad.step{t}.conv"] = conv
        if self.head_bn is not None:
            out["head.bn"] = self.head_bn
        out["head.fc"] = self.fc
        return out

    def named_parameters(self) -> dict[str, Tensor]:
        return {f"{group}.{key}": t
                for group, p in self.layer_params().items()
                for key, t in p.tensors().items()}

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def batchnorm_layers(self) -> dict[str, LayerParams]:
        return {k: p for k, p in self.layer_params().items()
                if isinstance(p, LayerParams) and p.scale is not None}

    def num_params(self) -> int:
        return sum(t.size for t in self.parameters())

    def zero_grad(self) -> None:
        for t in self.parameters():
            t.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        """Parameters and batch-norm running statistics as float arrays."""
        state = {name: t.data for name, t in self.named_parameters().items()}
        for group, p in self.batchnorm_layers().items():
            for key, arr in p.buffers().items():
                state[f"{group}.{key}"] = arr
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.named_parameters()
        for name, t in params.items():
            if name not in state:
                raise KeyError(f"missing parameter {name!r}")
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != t.shape:
                raise ShapeError(f"{name}: checkpoint shape {list(arr.shape)} != model {list(t.shape)}")
            t.data = arr.copy()
        for group, p in self.batchnorm_layers().items():
            if f"{group}.running_mean" in state:
                p.running_mean = np.asarray(state[f"{group}.running_mean"], dtype=np.float64).copy()
                p.running_var = np.asarray(state[f"{group}.running_var"], dtype=np.float64).copy()

    def _check_input(self, x: Tensor) -> None:
        s = self.spec
        expected = (s.T, s.in_channels, s.frame_size, s.frame_size)
        if x.ndim != 5 or x.shape[1:] != expected:
            raise ShapeError(f"model expects [N, {', '.join(map(str, expected))}], got {list(x.shape)}")

    def encode(self, x: ArrayLike, mode: str = "eval", dropout_seed: int = 0) -> Tensor:
        """Encoder output: ``[N, K*T, h, w]`` maps (time-aligned) or ``[N, D]`` vectors."""
        if not isinstance(x, Tensor):
            x = Tensor(x)
        self._check_input(x)
        s = self.spec
        n, T = x.shape[:2]
        if s.family == "hierarchical":
            return layers.hier_forward(layers.to_channels_first(x), self.hier_convs)
        if s.family == "frame_mean":
            order = [content_order(x.data[i]) for i in range(n)]
            x = stack([stack([take(take(x, i, 0), j, 0) for j in order[i]], axis=0) for i in range(n)], axis=0)
        fmap, _ = layers.frame_cnn(layers.frames_to_batch(x), self.frame_convs)
        # vector families read the whole flattened map: a global average keeps
        # almost nothing about where the blob is, so motion would be invisible
        fvec = flatten(fmap)
        if s.family == "sequential":
            seq = layers.reshape(fvec, (n, T, fvec.shape[1]))
            run = layers.lstm_forward if s.cell == "lstm" else layers.rnn_forward
            return run(seq, self.recurrent)
        if s.family == "frame_mean":
            return sorted_mean(layers.reshape(fvec, (n, T, fvec.shape[1])), axis=1)
        maps = layers.reshape(fmap, (n, T) + fmap.shape[1:])
        enc, _ = layers.tad_forward(maps, self.tad_steps, mode, s.dropout, dropout_seed)
        return enc

    def features(self, x: ArrayLike, mode: str = "eval", dropout_seed: int = 0) -> tuple[Tensor, Tensor]:
        """(head input features, logits)."""
        enc = self.encode(x, mode, dropout_seed)
        return layers.classifier_head(enc, self.fc, self.head_bn, mode)

    def forward(self, x: ArrayLike, mode: str = "eval", dropout_seed: int = 0) -> Tensor:
        return self.features(x, mode, dropout_seed)[1]

    __call__ = forward

    def tad_states(self, x: ArrayLike, mode: str = "eval", dropout_seed: int = 0) -> list[Tensor]:
        """Per-step states ``h_1..h_T`` of a time-aligned model."""
        if self.spec.family != "time_aligned":
            raise ValueError("tad_states is only defined for the time_aligned family")
        if not isinstance(x, Tensor):
            x = Tensor(x)
        self._check_input(x)
        n, T = x.shape[:2]
        fmap, _ = layers.frame_cnn(layers.frames_to_batch(x), self.frame_convs)
        maps = layers.reshape(fmap, (n, T) + fmap.shape[1:])
        return layers.tad_forward(maps, self.tad_steps, mode, self.spec.dropout, dropout_seed)[1]
