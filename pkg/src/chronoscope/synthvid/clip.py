"""Clips and datasets of clips."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

MIN_FRAMES = 16
ARROWS = ("forward", "backward")
SPLITS = ("train", "test")


@dataclass(eq=False)
class VideoClip:
    """``frames`` is ``[T_raw, 1, H, W]`` float32 with values in [0, 1]."""

    frames: np.ndarray
    fps: float = 12.0
    arrow: str = "forward"
    class_id: Optional[int] = None
    seed: int = 0
    kind: str = ""

    def __post_init__(self):
        self.frames = np.ascontiguousarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 4 or self.frames.shape[1] != 1:
            raise ValueError(f"frames must be [T, 1, H, W], got {list(self.frames.shape)}")
        if self.frames.shape[0] < MIN_FRAMES:
            raise ValueError(f"clips need at least {MIN_FRAMES} frames, got {self.frames.shape[0]}")
        if self.frames.size and not (self.frames.min() >= 0.0 and self.frames.max() <= 1.0):
            raise ValueError("pixel values must lie in [0, 1]")
        if self.arrow not in ARROWS:
            raise ValueError(f"arrow must be one of {ARROWS}, got {self.arrow!r}")

    @property
    def T_raw(self) -> int:
        return self.frames.shape[0]

    def __len__(self) -> int:
        return self.T_raw

    def __eq__(self, other) -> bool:
        if not isinstance(other, VideoClip):
            return NotImplemented
        return (self.frames.shape == other.frames.shape
                and self.frames.tobytes() == other.frames.tobytes()
                and self.fps == other.fps and self.arrow == other.arrow
                and self.class_id == other.class_id and self.seed == other.seed
                and self.kind == other.kind)


def reverse_clip(clip: VideoClip) -> VideoClip:
    """Same clip played backwards; the arrow label flips, everything else is kept."""
    arrow = "backward" if clip.arrow == "forward" else "forward"
    return replace(clip, frames=clip.frames[::-1].copy(), arrow=arrow)


@dataclass(eq=False)
class Dataset:
    clips: list = field(default_factory=list)
    class_names: list = field(default_factory=list)
    split: str = "train"
    version: int = 1

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {self.split!r}")
        for i, c in enumerate(self.clips):
            if c.class_id is not None and not 0 <= c.class_id < len(self.class_names):
                raise ValueError(f"clip {i}: class_id {c.class_id} outside {len(self.class_names)} classes")

    def __len__(self) -> int:
        return len(self.clips)

    def __iter__(self):
        return iter(self.clips)

    def __getitem__(self, i):
        return self.clips[i]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.split == other.split and self.version == other.version
                and list(self.class_names) == list(other.class_names)
                and len(self.clips) == len(other.clips)
                and all(a == b for a, b in zip(self.clips, other.clips)))

    def seeds(self) -> set:
        return {c.seed for c in self.clips}
