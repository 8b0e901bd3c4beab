"""Deterministic mini-batch training and evaluation."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from ..encoders import write_checkpoint
from ..encoders.spec import sub_seed
from ..tasks import (
    FutureTaskConfig,
    TaskInstance,
    build_task_instances,
    chance_level,
    model_scores,
    prec_at_k,
)
from ..tensor import Tensor, backward, get_tape, no_grad, softmax_cross_entropy
from ..tensor.nn import log_softmax
from .optim import DivergenceError, clip_grad_norm, sgd_step
from .records import MetricsRecord, append_records

DEFAULT_LR = 1e-3
HIER_LR = 1e-4  # the 3D-conv family trains unstably at the default rate
SEQ_CLIP_NORM = 5.0


@dataclass(frozen=True)
class TrainConfig:
    lr: Optional[float] = None  # None: per-family default
    momentum: float = 0.9
    weight_decay: float = 5e-4
    epochs: int = 30
    batch_size: int = 8
    seed: int = 0
    eval_every: int = 1
    task: str = "arrow"
    encoder: str = "tad"
    clip_norm: Optional[float] = None  # None: 5.0 for sequential encoders, off otherwise
    n_frames: Optional[int] = None

    def __post_init__(self):
        if self.lr is not None and not self.lr > 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0 or self.eval_every < 1:
            raise ValueError("epochs must be >= 0 and eval_every >= 1")

    def resolved_lr(self, family: str) -> float:
        if self.lr is not None:
            return self.lr
        return HIER_LR if family == "hierarchical" else DEFAULT_LR

    def resolved_clip(self, family: str) -> Optional[float]:
        if self.clip_norm is not None:
            return self.clip_norm if self.clip_norm > 0 else None
        return SEQ_CLIP_NORM if family == "sequential" else None


@dataclass
class TrainResult:
    records: list = field(default_factory=list)
    epoch_losses: list = field(default_factory=list)
    steps: int = 0


def _stack(instances: Sequence[TaskInstance]) -> np.ndarray:
    return np.stack([inst.volume for inst in instances])


def _targets(instances: Sequence[TaskInstance]) -> np.ndarray:
    return np.array([inst.target for inst in instances], dtype=np.int64)


def predict_logits(model, instances: Sequence[TaskInstance], batch_size: int = 32) -> np.ndarray:
    """Eval-mode logits ``[N, num_classes]`` for classification instances."""
    out = []
    with no_grad():
        for s in range(0, len(instances), batch_size):
            out.append(model(Tensor(_stack(instances[s: s + batch_size])), mode="eval").data)
    return np.concatenate(out)


def _per_class(correct: np.ndarray, keys: Sequence) -> dict:
    acc = {}
    for k in sorted(set(keys)):
        m = np.array([x == k for x in keys])
        acc[str(k)] = float(correct[m].mean())
    return acc


def evaluate(model, instances: Sequence[TaskInstance], task: str = "arrow", epoch: int = 0,
             split: str = "test", class_names: Optional[Sequence[str]] = None, **meta) -> MetricsRecord:
    """Metrics of ``model`` (eval mode: running BN statistics, no dropout) on ``instances``.

    Classification tasks score logits directly; future-selection instances
    score every candidate with the positive-class logit and treat the
    ``C`` scores as the row's logits.
    """
    if not instances:
        raise ValueError("cannot evaluate an empty instance set")
    targets = _targets(instances)
    if instances[0].candidate_frames is not None:
        logits = np.stack(model_scores(model, instances))
    else:
        logits = predict_logits(model, instances)
    C = logits.shape[1]
    loss = float(-log_softmax(logits)[np.arange(len(targets)), targets].mean())
    p1 = prec_at_k(logits, targets, 1)
    p5 = prec_at_k(logits, targets, min(5, C))
    per_class = {}
    if all(inst.class_id is not None for inst in instances):
        correct = np.argmax(logits, axis=1) == targets
        names = class_names or []
        keys = [names[i.class_id] if i.class_id < len(names) else i.class_id for i in instances]
        per_class = _per_class(correct, keys)
    elif task == "arrow":
        correct = np.argmax(logits, axis=1) == targets
        per_class = _per_class(correct, ["forward" if t == 1 else "backward" for t in targets])
    return MetricsRecord(task=task, split=split, epoch=epoch, loss=loss, accuracy=p1, prec1=p1, prec5=p5,
                         per_class=per_class, n=len(instances), **meta)


def _grads(model) -> dict:
    return {name: t.grad for name, t in model.named_parameters().items()}


def train_loop(cfg: TrainConfig, train_set, test_set, model, *,
               future_cfg: Optional[FutureTaskConfig] = None,
               metrics_path: Optional[Path] = None,
               checkpoint_path: Optional[Path] = None,
               config_hash: str = "",
               dataset_hash: str = "",
               timing: bool = False,
               on_record: Optional[Callable[[MetricsRecord], None]] = None,
               on_epoch: Optional[Callable[[int, float], None]] = None) -> TrainResult:
    """Train ``model`` on ``train_set`` clips, evaluating on ``test_set`` every ``eval_every`` epochs.

    Frames are resampled every epoch (multinomial, fresh sub-seed); evaluation
    uses fixed uniform sampling. An evaluation also runs before the first
    epoch and after the last. On a non-finite loss or gradient the last good
    parameters are written to ``checkpoint_path`` and DivergenceError is raised.
    ``on_record`` sees every evaluation, ``on_epoch`` every (epoch, mean training loss).
    """
    family = model.spec.family
    lr = cfg.resolved_lr(family)
    max_norm = cfg.resolved_clip(family)
    names = getattr(train_set, "class_names", None)
    test_instances = build_task_instances(cfg.task, test_set, "test", sub_seed(cfg.seed, "test"),
                                          future_cfg, cfg.n_frames) if test_set is not None else []
    meta = dict(seed=cfg.seed, config_hash=config_hash, encoder=model.spec.name,
                dataset_hash=dataset_hash, chance=chance_level(cfg.task, future_cfg))
    digest = bytes.fromhex(config_hash) if len(config_hash) == 64 else bytes(32)
    result = TrainResult()
    velocity: dict = {}
    t0 = time.perf_counter()

    def emit(epoch: int) -> None:
        if not test_instances:
            return
        rec = evaluate(model, test_instances, cfg.task, epoch, "test", names, **meta)
        rec.wall_seconds = time.perf_counter() - t0
        result.records.append(rec)
        if metrics_path is not None:
            append_records(metrics_path, [rec], timing)
        if on_record is not None:
            on_record(rec)

    emit(0)
    good = model.state_dict()
    good = {k: v.copy() for k, v in good.items()}
    for epoch in range(1, cfg.epochs + 1):
        instances = build_task_instances(cfg.task, train_set, "train", sub_seed(cfg.seed, f"epoch{epoch}"),
                                         future_cfg, cfg.n_frames)
        order = np.random.default_rng(sub_seed(cfg.seed, f"shuffle{epoch}")).permutation(len(instances))
        losses = []
        for s in range(0, len(order), cfg.batch_size):
            batch = [instances[i] for i in order[s: s + cfg.batch_size]]
            step = result.steps
            model.zero_grad()
            logits = model(Tensor(_stack(batch)), mode="train", dropout_seed=sub_seed(cfg.seed, f"drop{step}"))
            loss = softmax_cross_entropy(logits, _targets(batch))
            value = loss.item()
            try:
                if not np.isfinite(value):
                    raise DivergenceError(f"loss became {value} at epoch {epoch}, step {step}")
                backward(loss)
                grads = _grads(model)
                clip_grad_norm(grads, max_norm)
                sgd_step(model.named_parameters(), grads, velocity, lr, cfg.momentum, cfg.weight_decay, step)
            except DivergenceError:
                get_tape().clear()
                model.load_state_dict(good)
                if checkpoint_path is not None:
                    write_checkpoint(checkpoint_path, good, digest)
                raise
            losses.append(value * len(batch))
            result.steps += 1
        result.epoch_losses.append(float(np.sum(losses) / len(instances)))
        if on_epoch is not None:
            on_epoch(epoch, result.epoch_losses[-1])
        good = {k: v.copy() for k, v in model.state_dict().items()}
        if epoch % cfg.eval_every == 0 or epoch == cfg.epochs:
            emit(epoch)
    if checkpoint_path is not None:
        write_checkpoint(checkpoint_path, model.state_dict(), digest)
    return result
