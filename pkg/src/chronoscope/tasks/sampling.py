"""Frame sampling and the instance record shared by all tasks."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

N_FRAMES = 16


@dataclass
class TaskInstance:
    """One model input plus its target.

    ``volume`` is ``[T, 1, H, W]`` (float32). Future-selection instances also
    carry candidate frames: a single appended frame for training pairs, or
    all ``C`` options (``candidate_frames``) for a test-time choice.
    """

    frame_indices: tuple
    volume: np.ndarray
    target: int
    clip_index: int = -1
    class_id: Optional[int] = None
    tau: Optional[float] = None
    candidates: tuple = ()
    candidate_frames: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        idx = np.asarray(self.frame_indices)
        if idx.ndim != 1 or (len(idx) > 1 and np.any(np.diff(idx) <= 0)):
            raise ValueError("frame_indices must be strictly increasing")


def _length(clip_or_len) -> int:
    return int(clip_or_len) if np.isscalar(clip_or_len) else len(clip_or_len)


def sample_frames(clip, n: int = N_FRAMES, mode: str = "uniform", seed: Optional[int] = None) -> np.ndarray:
    """Sorted frame indices into ``clip`` (a clip or a frame count).

    ``multinomial`` draws ``n`` distinct frames with equal weights (training);
    ``uniform`` picks ``round(i (T-1) / (n-1))``, rounding halves up (testing).
    """
    T = _length(clip)
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if T < n:
        raise ValueError(f"clip has {T} frames, need at least {n}")
    if mode == "multinomial":
        if seed is None:
            raise ValueError("multinomial sampling needs a seed")
        return np.sort(np.random.default_rng(seed).choice(T, size=n, replace=False))
    if mode == "uniform":
        if n == 1:
            return np.zeros(1, dtype=np.int64)
        return np.floor(np.arange(n) * (T - 1) / (n - 1) + 0.5).astype(np.int64)
    raise ValueError(f"unknown sampling mode {mode!r}")


def sampling_mode(mode: str) -> str:
    """Training draws frames at random, evaluation spaces them evenly."""
    if mode not in ("train", "test"):
        raise ValueError(f"mode must be 'train' or 'test', got {mode!r}")
    return "multinomial" if mode == "train" else "uniform"


def clip_seed(seed: int, index: int) -> int:
    """Independent per-clip seed so instances do not depend on iteration order."""
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1, np.uint64)[0] >> 1)
