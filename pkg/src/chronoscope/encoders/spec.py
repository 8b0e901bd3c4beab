"""Encoder configuration and closed-form parameter counts."""
from __future__ import annotations

import zlib
from dataclasses import dataclass, replace

import numpy as np

FAMILIES = ("sequential", "hierarchical", "time_aligned", "frame_mean")
CELLS = ("rnn", "lstm")

# short CLI names -> (family, cell)
ALIASES = {
    "rnn": ("sequential", "rnn"),
    "lstm": ("sequential", "lstm"),
    "hier": ("hierarchical", None),
    "tad": ("time_aligned", None),
    "mean": ("frame_mean", None),
}


@dataclass(frozen=True)
class EncoderSpec:
    """Hyperparameters for one encoder family plus its classifier head.

    ``base_channels`` are the frame-CNN widths; the first two blocks halve the
    spatial size, so a 16x16 frame leaves a 4x4 map. ``hier_channels`` are the
    conv3d widths of the hierarchical family.
    """

    family: str
    cell: str | None = None
    T: int = 16
    hidden: int = 64
    K: int = 12
    base_channels: tuple[int, ...] = (16, 32, 32)
    hier_channels: tuple[int, ...] = (16, 32, 32)
    kernel: int = 3
    frame_size: int = 16
    in_channels: int = 1
    dropout: float = 0.1
    num_classes: int = 2

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown encoder family {self.family!r}")
        if self.family == "sequential":
            if self.cell not in CELLS:
                raise ValueError(f"sequential family needs cell in {CELLS}, got {self.cell!r}")
        elif self.cell is not None:
            raise ValueError(f"family {self.family!r} takes no cell")
        if self.T < 1 or self.K < 1 or self.hidden < 1:
            raise ValueError("T, K and hidden must all be >= 1")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if len(self.base_channels) != 3 or len(self.hier_channels) != 3:
            raise ValueError("frame CNN and hierarchical stacks have exactly 3 blocks")
        if self.kernel % 2 != 1:
            raise ValueError("kernel size must be odd (same padding)")
        if self.family == "hierarchical" and self.T < 4:
            raise ValueError("the hierarchical family needs T >= 4 for its two temporal pools")
        if self.frame_size % 4:
            raise ValueError("frame_size must be divisible by 4")

    @classmethod
    def from_name(cls, name: str, **kw) -> "EncoderSpec":
        try:
            family, cell = ALIASES[name]
        except KeyError:
            raise ValueError(f"unknown encoder {name!r}; choose from {sorted(ALIASES)}") from None
        return cls(family=family, cell=cell, **kw)

    @property
    def name(self) -> str:
        return {"sequential": self.cell, "hierarchical": "hier", "time_aligned": "tad",
                "frame_mean": "mean"}[self.family]

    @property
    def feature_dim(self) -> int:
        """Frame-CNN channel count F."""
        return self.base_channels[-1]

    @property
    def vector_dim(self) -> int:
        """Length of one frame's flattened feature map, the per-step input of the vector families."""
        return self.feature_dim * self.map_size ** 2

    @property
    def hier_dim(self) -> int:
        """Flattened output of the hierarchical stack: two 2x2x2 pools shrink T, H and W."""
        return self.hier_channels[-1] * (self.T // 2 // 2) * self.map_size ** 2

    @property
    def map_size(self) -> int:
        return self.frame_size // 4

    def with_(self, **kw) -> "EncoderSpec":
        return replace(self, **kw)


def sub_seed(seed: int, name: str) -> int:
    """Stable per-tensor seed derived from a model seed and a parameter name."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, zlib.crc32(name.encode())])
    return int(ss.generate_state(1)[0])


def _conv_count(cin: int, cout: int, kvol: int) -> int:
    return cout * cin * kvol + cout


def tad_step_count(spec: EncoderSpec, t: int) -> int:
    """Parameters of dense step ``t`` (1-based): batch-norm over the concat, then conv to K maps."""
    cin = spec.feature_dim + (t - 1) * spec.K
    return _conv_count(cin, spec.K, spec.kernel ** 2) + 2 * cin


def param_breakdown(spec: EncoderSpec) -> dict[str, int]:
    """Learnable-scalar counts split into ``frame_cnn``, ``encoder`` and ``head``.

    Sequential cells count ``g*(H*d + H*H + H)`` with ``g`` = 1 (rnn) or 4 (lstm);
    the hierarchical stack and frame CNN count ``cout*cin*k^n + cout`` per conv;
    a time-aligned encoder sums its unshared steps (see :func:`tad_step_count`).
    """
    k2 = spec.kernel ** 2
    frame = 0
    if spec.family != "hierarchical":
        cin = spec.in_channels
        for cout in spec.base_channels:
            frame += _conv_count(cin, cout, k2)
            cin = cout
    d = spec.vector_dim
    if spec.family == "sequential":
        gates = 4 if spec.cell == "lstm" else 1
        h = spec.hidden
        enc = gates * (h * d + h * h + h)
        head = h * spec.num_classes + spec.num_classes
    elif spec.family == "hierarchical":
        enc, cin = 0, spec.in_channels
        for cout in spec.hier_channels:
            enc += _conv_count(cin, cout, spec.kernel ** 3)
            cin = cout
        head = spec.hier_dim * spec.num_classes + spec.num_classes
    elif spec.family == "time_aligned":
        enc = sum(tad_step_count(spec, t) for t in range(1, spec.T + 1))
        maps = spec.K * spec.T
        pooled = (spec.map_size // 2) ** 2
        head = 2 * maps + maps * pooled * spec.num_classes + spec.num_classes
    else:
        enc = 0
        head = d * spec.num_classes + spec.num_classes
    return {"frame_cnn": frame, "encoder": enc, "head": head}


def count_params(spec: EncoderSpec) -> int:
    """Exact number of learnable scalars of the full model described by ``spec``."""
    return sum(param_breakdown(spec).values())
