"""Template classification where reverse-pair classes differ only in frame order."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..synthvid import CLASS_NAMES, FPS, REVERSE_PAIRS, T_RAW, Dataset, generate_dataset
from .sampling import TaskInstance, clip_seed, sample_frames, sampling_mode

TEMPLATE_FRAMES = 4
PARTNER = {a: b for a, b in REVERSE_PAIRS} | {b: a for a, b in REVERSE_PAIRS}


@dataclass(frozen=True)
class TemplateTaskConfig:
    n_per_class: int = 100
    n_frames: int = TEMPLATE_FRAMES
    T_raw: int = T_RAW
    fps: float = FPS
    split: str = "train"

    @property
    def chance(self) -> float:
        return 1.0 / len(CLASS_NAMES)


def build_template_instances(base: Dataset, seed: int, mode: str = "train",
                             n_frames: int = TEMPLATE_FRAMES) -> list[TaskInstance]:
    how = sampling_mode(mode)
    out = []
    for ci, clip in enumerate(base.clips):
        idx = sample_frames(clip, n_frames, how, clip_seed(seed, ci))
        out.append(TaskInstance(tuple(int(i) for i in idx), clip.frames[idx], clip.class_id, ci, clip.class_id))
    return out


def build_template_dataset(cfg: TemplateTaskConfig, seed: int) -> tuple[Dataset, list[TaskInstance]]:
    """Balanced clips with seeds ``seed, seed+1, ...`` and their instances."""
    n = cfg.n_per_class * len(CLASS_NAMES)
    data = generate_dataset("template", n, seed, cfg.split, cfg.T_raw, cfg.fps)
    mode = "train" if cfg.split == "train" else "test"
    return data, build_template_instances(data, seed, mode, cfg.n_frames)


def reverse_pair_accuracy(logits: np.ndarray, targets: np.ndarray) -> tuple[float, int]:
    """Among rows whose class has a reverse partner, how often the true class outscores it.

    Ties count as half. Returns ``(accuracy, rows counted)``.
    """
    logits = np.asarray(logits, dtype=np.float64)
    total, n = 0.0, 0
    for row, t in zip(logits, np.asarray(targets)):
        p = PARTNER.get(int(t))
        if p is None:
            continue
        n += 1
        total += 1.0 if row[t] > row[p] else 0.5 if row[t] == row[p] else 0.0
    if n == 0:
        raise ValueError("no reverse-pair rows")
    return total / n, n
