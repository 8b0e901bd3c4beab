"""Forward-versus-backward classification."""
from __future__ import annotations

from ..synthvid import Dataset
from .sampling import N_FRAMES, TaskInstance, clip_seed, sample_frames, sampling_mode

FORWARD, BACKWARD = 1, 0
CHANCE = 0.5


def build_arrow_dataset(base: Dataset, seed: int, mode: str = "train", n: int = N_FRAMES) -> list[TaskInstance]:
    """Two instances per clip: the clip as played (label 1) and reversed (label 0).

    Both use the same sampled positions, so in the original clip's frame
    numbering the backward instance reads the mirrored indices ``T-1-i``.
    """
    how = sampling_mode(mode)
    out = []
    for ci, clip in enumerate(base.clips):
        idx = sample_frames(clip, n, how, clip_seed(seed, ci))
        fwd = clip.frames[idx]
        bwd = clip.frames[::-1][idx]
        first, second = (FORWARD, BACKWARD) if clip.arrow == "forward" else (BACKWARD, FORWARD)
        out.append(TaskInstance(tuple(int(i) for i in idx), fwd, first, ci, clip.class_id))
        out.append(TaskInstance(tuple(int(i) for i in idx), bwd.copy(), second, ci, clip.class_id))
    return out
