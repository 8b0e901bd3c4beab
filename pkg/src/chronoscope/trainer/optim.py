"""SGD with momentum and L2 weight decay folded into the gradient."""
from __future__ import annotations

from typing import Mapping, Optional

import numpy as np


class DivergenceError(RuntimeError):
    pass


def sgd_step(params: Mapping, grads: Mapping, state: dict, lr: float, momentum: float = 0.9,
             weight_decay: float = 5e-4, step: int = 0) -> None:
    """In-place update ``v = momentum*v + g + wd*p; p -= lr*v`` for every named parameter.

    ``params`` maps names to tensors, ``grads`` names to arrays (missing or
    ``None`` means zero). ``state`` holds the velocities between calls.
    """
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        elif not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient in {name} at step {step}")
        v = state.get(name)
        d = g + weight_decay * p.data if weight_decay else g
        v = d.copy() if v is None else momentum * v + d
        state[name] = v
        p.data = p.data - lr * v


def global_norm(grads: Mapping) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values() if g is not None)))


def clip_grad_norm(grads: dict, max_norm: Optional[float]) -> float:
    """Scale all gradients so their joint L2 norm is at most ``max_norm``; returns the norm before."""
    norm = global_norm(grads)
    if max_norm is not None and norm > max_norm:
        s = max_norm / norm
        for k, g in grads.items():
            if g is not None:
                grads[k] = g * s
    return norm
