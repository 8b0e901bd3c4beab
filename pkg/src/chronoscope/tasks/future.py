"""Future-frame selection posed as retrieval among C candidate frames."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from ..tensor import Tensor, no_grad
from .metrics import argmax_first
from .sampling import N_FRAMES, TaskInstance, clip_seed, sample_frames, sampling_mode

FPS = 12.0
# last observed frame numbers 15, 20, ..., 35 at 12 fps: each leaves room for a
# 16-frame context and stays below the 80% distractor horizon of a 48-frame clip
DEFAULT_TAU_SCHEDULE = tuple(f / FPS for f in (15, 20, 25, 30, 35))


@dataclass(frozen=True)
class FutureTaskConfig:
    C: int = 5
    tau_schedule: tuple = DEFAULT_TAU_SCHEDULE
    horizon_fraction: float = 0.8
    n_context: int = N_FRAMES

    def __post_init__(self):
        if self.C < 2:
            raise ValueError(f"C must be >= 2, got {self.C}")
        if not 0.0 < self.horizon_fraction < 1.0:
            raise ValueError(f"horizon_fraction must be in (0, 1), got {self.horizon_fraction}")
        if not self.tau_schedule:
            raise ValueError("tau_schedule is empty")

    def horizon(self, T_raw: int) -> int:
        """Distractors are drawn from frames ``[0, horizon)``."""
        return int(math.floor(self.horizon_fraction * T_raw))

    @property
    def chance(self) -> float:
        return 1.0 / self.C


def tau_index(tau: float, fps: float) -> int:
    return int(round(tau * fps))


def build_future_instances(clip, cfg: FutureTaskConfig, tau: float, mode: str, seed: int,
                           clip_index: int = -1) -> list[TaskInstance]:
    """Instances for one clip observed up to time ``tau`` (seconds).

    The context is ``n_context`` frames from ``[0, tau*fps]``; the true future
    is the clip's last frame. Training yields a positive and a negative pair
    (context plus one appended candidate, label 1/0). Testing yields a single
    ``C``-way instance whose target is the position of the true frame.
    """
    T = clip.T_raw
    last = tau_index(tau, clip.fps)
    horizon = cfg.horizon(T)
    if last >= horizon or last < 0:
        raise ValueError(f"tau={tau}s is frame {last}; it must lie in [0, {horizon}) for a {T}-frame clip")
    if last + 1 < cfg.n_context:
        raise ValueError(f"tau={tau}s leaves {last + 1} observed frames, need {cfg.n_context}")
    rng = np.random.default_rng(seed)
    ctx = sample_frames(last + 1, cfg.n_context, sampling_mode(mode), int(rng.integers(2 ** 63)))
    context = clip.frames[ctx]
    idx = tuple(int(i) for i in ctx)
    truth = T - 1
    if mode == "train":
        neg = int(rng.integers(0, horizon))
        return [
            TaskInstance(idx, np.concatenate([context, clip.frames[truth][None]]), 1, clip_index,
                         clip.class_id, tau, (truth,)),
            TaskInstance(idx, np.concatenate([context, clip.frames[neg][None]]), 0, clip_index,
                         clip.class_id, tau, (neg,)),
        ]
    distractors = rng.choice(horizon, size=cfg.C - 1, replace=False)
    cands = np.concatenate([[truth], distractors])[rng.permutation(cfg.C)]
    answer = int(np.flatnonzero(cands == truth)[0])
    return [TaskInstance(idx, context, answer, clip_index, clip.class_id, tau,
                         tuple(int(c) for c in cands), clip.frames[cands])]


def build_future_dataset(base, cfg: FutureTaskConfig, mode: str, seed: int) -> list[TaskInstance]:
    """Training draws a random tau per clip; testing cycles through the schedule."""
    out = []
    for ci, clip in enumerate(base.clips):
        s = clip_seed(seed, ci)
        if mode == "train":
            tau = cfg.tau_schedule[int(np.random.default_rng(s).integers(len(cfg.tau_schedule)))]
        else:
            tau = cfg.tau_schedule[ci % len(cfg.tau_schedule)]
        out.extend(build_future_instances(clip, cfg, tau, mode, s + 1, ci))
    return out


def candidate_volumes(inst: TaskInstance) -> np.ndarray:
    """``[C, n_context + 1, 1, H, W]``: the context followed by each candidate."""
    C = len(inst.candidate_frames)
    ctx = np.broadcast_to(inst.volume, (C,) + inst.volume.shape)
    return np.concatenate([ctx, inst.candidate_frames[:, None]], axis=1)


def model_scores(model, instances: Sequence[TaskInstance], batch_size: int = 40) -> list[np.ndarray]:
    """Positive-class logit of ``model`` for every candidate of every instance."""
    flat, sizes = [], []
    for inst in instances:
        v = candidate_volumes(inst)
        flat.append(v)
        sizes.append(len(v))
    if not flat:
        return []
    allv = np.concatenate(flat)
    scores = []
    with no_grad():
        for s in range(0, len(allv), batch_size):
            logits = model(Tensor(allv[s: s + batch_size]), mode="eval").data
            scores.append(logits[:, 1])
    scores = np.concatenate(scores)
    return np.split(scores, np.cumsum(sizes)[:-1])


Scorer = Union[Callable[[TaskInstance], np.ndarray], object]


def selection_predictions(scorer, instances: Sequence[TaskInstance]) -> np.ndarray:
    if hasattr(scorer, "spec"):
        scores = model_scores(scorer, instances)
    else:
        scores = [scorer(inst) for inst in instances]
    return np.array([argmax_first(s) for s in scores], dtype=np.int64)


def eval_future_selection(scorer, instances: Sequence[TaskInstance]) -> float:
    """Accuracy of picking the highest-scoring candidate.

    ``scorer`` is a binary model (its class-1 logit scores a candidate) or a
    callable mapping an instance to one score per candidate.
    """
    if not instances:
        raise ValueError("no instances to evaluate")
    pred = selection_predictions(scorer, instances)
    return float(np.mean(pred == np.array([i.target for i in instances])))


def random_scorer(seed: int) -> Callable[[TaskInstance], np.ndarray]:
    rng = np.random.default_rng(seed)
    return lambda inst: rng.random(len(inst.candidates))


def oracle_scorer(inst: TaskInstance) -> np.ndarray:
    return (np.arange(len(inst.candidates)) == inst.target).astype(np.float64)


def _embedder(frame_cnn) -> Callable[[np.ndarray], np.ndarray]:
    if hasattr(frame_cnn, "frame_convs"):
        from ..encoders import frame_cnn as run_cnn

        convs = frame_cnn.frame_convs

        def embed(frames):
            with no_grad():
                fmap = run_cnn(Tensor(frames), convs)[0].data
            return fmap.reshape(len(fmap), -1)
        return embed
    return frame_cnn


def cosine_scores(query: np.ndarray, cands: np.ndarray) -> np.ndarray:
    q = query / max(np.linalg.norm(query), 1e-12)
    c = cands / np.maximum(np.linalg.norm(cands, axis=1, keepdims=True), 1e-12)
    return c @ q


def frame_similarity_baseline(instances: Sequence[TaskInstance], frame_cnn) -> float:
    """Pick the candidate whose frame embedding is most cosine-similar to the last observed frame.

    ``frame_cnn`` is a model with a frame CNN (its flattened conv map is the
    embedding) or a callable ``[B,1,H,W] -> [B,D]``.
    """
    if not instances:
        raise ValueError("no instances to evaluate")
    embed = _embedder(frame_cnn)
    correct = 0
    for inst in instances:
        e = embed(np.concatenate([inst.volume[-1:], inst.candidate_frames]).astype(np.float64))
        correct += argmax_first(cosine_scores(e[0], e[1:])) == inst.target
    return correct / len(instances)
