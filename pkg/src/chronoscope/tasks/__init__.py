"""The three time-aware tasks: arrow of time, future-frame selection, template classes."""
from __future__ import annotations

from typing import Optional

from .arrow import BACKWARD, CHANCE as ARROW_CHANCE, FORWARD, build_arrow_dataset
from .future import (
    DEFAULT_TAU_SCHEDULE,
    FutureTaskConfig,
    build_future_dataset,
    build_future_instances,
    candidate_volumes,
    cosine_scores,
    eval_future_selection,
    frame_similarity_baseline,
    model_scores,
    oracle_scorer,
    random_scorer,
    selection_predictions,
    tau_index,
)
from .metrics import argmax_first, prec_at_k, target_rank
from .sampling import N_FRAMES, TaskInstance, clip_seed, sample_frames, sampling_mode
from .template import (
    PARTNER,
    TEMPLATE_FRAMES,
    TemplateTaskConfig,
    build_template_dataset,
    build_template_instances,
    reverse_pair_accuracy,
)

TASKS = ("arrow", "future", "template")


def build_task_instances(task: str, base, mode: str, seed: int,
                         future_cfg: Optional[FutureTaskConfig] = None,
                         n_frames: Optional[int] = None) -> list[TaskInstance]:
    """Instances of ``task`` for every clip in ``base`` (train or test sampling)."""
    if task == "arrow":
        return build_arrow_dataset(base, seed, mode, n_frames or N_FRAMES)
    if task == "future":
        return build_future_dataset(base, future_cfg or FutureTaskConfig(), mode, seed)
    if task == "template":
        return build_template_instances(base, seed, mode, n_frames or TEMPLATE_FRAMES)
    raise ValueError(f"unknown task {task!r}; choose from {TASKS}")


def task_num_classes(task: str) -> int:
    return 8 if task == "template" else 2


def task_input_frames(task: str, future_cfg: Optional[FutureTaskConfig] = None,
                      n_frames: Optional[int] = None) -> int:
    """Time steps the encoder sees: future candidates arrive as one extra step."""
    if task == "future":
        return (future_cfg or FutureTaskConfig()).n_context + 1
    if task == "template":
        return n_frames or TEMPLATE_FRAMES
    return n_frames or N_FRAMES


def chance_level(task: str, future_cfg: Optional[FutureTaskConfig] = None) -> float:
    if task == "arrow":
        return ARROW_CHANCE
    if task == "future":
        return (future_cfg or FutureTaskConfig()).chance
    if task == "template":
        return 1.0 / 8
    raise ValueError(f"unknown task {task!r}")


__all__ = [
    "ARROW_CHANCE", "BACKWARD", "DEFAULT_TAU_SCHEDULE", "FORWARD", "FutureTaskConfig", "N_FRAMES",
    "PARTNER", "TASKS", "TEMPLATE_FRAMES", "TaskInstance", "TemplateTaskConfig", "argmax_first",
    "build_arrow_dataset", "build_future_dataset", "build_future_instances", "build_task_instances",
    "build_template_dataset", "build_template_instances", "candidate_volumes", "chance_level",
    "clip_seed", "cosine_scores", "eval_future_selection", "frame_similarity_baseline",
    "model_scores", "oracle_scorer", "prec_at_k", "random_scorer", "reverse_pair_accuracy",
    "sample_frames", "sampling_mode", "selection_predictions", "target_rank", "task_input_frames",
    "task_num_classes", "tau_index",
]
