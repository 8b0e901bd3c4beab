"""Central-difference verification of tape gradients."""
from __future__ import annotations

from typing import Callable, Sequence, Union

import numpy as np

from .core import Tensor, backward, get_tape, no_grad

Inputs = Union[Tensor, Sequence[Tensor]]


def numerical_grad(f: Callable[[Inputs], Tensor], x: Inputs, eps: float = 1e-6) -> list[np.ndarray]:
    """Central differences ``(f(x+eps) - f(x-eps)) / 2eps`` for every coordinate of every input."""
    xs = [x] if isinstance(x, Tensor) else list(x)
    out = []
    with no_grad():
        for t in xs:
            g = np.zeros_like(t.data)
            flat = t.data.reshape(-1)
            gflat = g.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                hi, lo = orig + eps, orig - eps
                flat[i] = hi
                fp = float(f(x).data)
                flat[i] = lo
                fm = float(f(x).data)
                flat[i] = orig
                # divide by the step actually taken; x +- eps is rounded to the float grid
                gflat[i] = (fp - fm) / (hi - lo)
            out.append(g)
    return out


def analytic_grad(f: Callable[[Inputs], Tensor], x: Inputs) -> list[np.ndarray]:
    xs = [x] if isinstance(x, Tensor) else list(x)
    get_tape().clear()
    for t in xs:
        t.requires_grad = True
        t.grad = None
    backward(f(x))
    return [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in xs]


def grad_check(f: Callable[[Inputs], Tensor], x: Inputs, eps: float = 1e-6) -> float:
    """Max relative error between autodiff and central-difference gradients.

    ``f`` is called with ``x`` (a tensor or a list of tensors) and must return a
    scalar. Relative error per coordinate is ``|a - n| / max(|a|, |n|, 1e-8)``.
    """
    ana = analytic_grad(f, x)
    num = numerical_grad(f, x, eps)
    worst = 0.0
    for a, n in zip(ana, num):
        if a.size == 0:
            continue
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst
