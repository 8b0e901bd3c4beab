"""Ranking metrics with deterministic tie-breaking (lower index wins)."""
from __future__ import annotations

import numpy as np


def target_rank(logits: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """0-based rank of each row's target; ties go to the lower class index."""
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    rows = np.arange(len(targets))
    t = logits[rows, targets][:, None]
    cls = np.arange(logits.shape[1])[None, :]
    beats = (logits > t) | ((logits == t) & (cls < targets[:, None]))
    return beats.sum(axis=1)


def prec_at_k(logits: np.ndarray, targets: np.ndarray, k: int) -> float:
    """Fraction of rows whose target is among the ``k`` highest logits."""
    logits = np.asarray(logits)
    if logits.ndim != 2:
        raise ValueError(f"logits must be [N, C], got shape {list(logits.shape)}")
    C = logits.shape[1]
    if not 1 <= k <= C:
        raise ValueError(f"k must be in [1, {C}], got {k}")
    if len(logits) == 0:
        raise ValueError("no rows to score")
    return float((target_rank(logits, targets) < k).mean())


def argmax_first(scores: np.ndarray) -> int:
    """Index of the largest score, lowest index on ties."""
    return int(np.argmax(np.asarray(scores)))
