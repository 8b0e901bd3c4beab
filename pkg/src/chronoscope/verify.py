"""Finite-difference checks of every registered primitive and of whole encoders."""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .encoders import EncoderSpec, VideoModel
from .tensor import (
    PRIMITIVES,
    LayerParams,
    Tensor,
    add,
    add_bias,
    batchnorm,
    concat,
    conv2d,
    conv3d,
    dropout,
    global_avg_pool,
    grad_check,
    matmul,
    max_pool2d,
    max_pool3d,
    mul,
    permute,
    relu,
    reshape,
    scale,
    sigmoid,
    slice_axis,
    softmax_cross_entropy,
    sorted_mean,
    stack,
    sub,
    sum_all,
    take,
    tanh,
)

TOLERANCE = 1e-4
EPS = 1e-6


@dataclass
class CheckResult:
    name: str
    max_rel_error: float
    seconds: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_rel_error)) and self.max_rel_error < TOLERANCE


def _t(rng, *shape) -> Tensor:
    return Tensor(rng.standard_normal(shape))


def _primitive_cases() -> dict[str, Callable[[], tuple]]:
    """name -> builder returning ``(f, inputs)`` for :func:`grad_check`."""

    def unary(op, *shape):
        def build():
            rng = np.random.default_rng(1)
            x = _t(rng, *shape)
            w = Tensor(rng.standard_normal(op(x).shape))
            return (lambda v: sum_all(mul(op(v), w))), x
        return build

    def binary(op):
        def build():
            rng = np.random.default_rng(2)
            a, b = _t(rng, 3, 4), _t(rng, 3, 4)
            w = Tensor(rng.standard_normal((3, 4)))
            return (lambda v: sum_all(mul(op(v[0], v[1]), w))), [a, b]
        return build

    def conv(nd):
        def build():
            rng = np.random.default_rng(3)
            spatial = (4, 5, 5) if nd == 3 else (6, 6)
            x = _t(rng, 2, 2, *spatial)
            p = LayerParams.conv(2, 3, (3,) * nd, seed=4)
            p.bias.data = rng.standard_normal(3)
            fn = conv3d if nd == 3 else conv2d
            w = Tensor(rng.standard_normal(fn(x, p, padding=1).shape))
            return (lambda v: sum_all(mul(fn(v[0], p, padding=1), w))), [x, p.weight, p.bias]
        return build

    def bn():
        rng = np.random.default_rng(5)
        x = Tensor(rng.standard_normal((4, 3, 2, 2)) * 2.0 + 1.0)
        p = LayerParams.batchnorm(3)
        p.scale.data = rng.uniform(0.5, 1.5, 3)
        p.shift.data = rng.standard_normal(3)
        w = Tensor(rng.standard_normal(x.shape))
        return (lambda v: sum_all(mul(batchnorm(v[0], p, "train"), w))), [x, p.scale, p.shift]

    def matmul_case():
        rng = np.random.default_rng(6)
        a, b = _t(rng, 3, 4), _t(rng, 4, 2)
        w = Tensor(rng.standard_normal((3, 2)))
        return (lambda v: sum_all(mul(matmul(v[0], v[1]), w))), [a, b]

    def add_bias_case():
        rng = np.random.default_rng(7)
        x, b = _t(rng, 2, 3, 2), _t(rng, 3)
        w = Tensor(rng.standard_normal((2, 3, 2)))
        return (lambda v: sum_all(mul(add_bias(v[0], v[1]), w))), [x, b]

    def ce_case():
        rng = np.random.default_rng(8)
        x = _t(rng, 5, 4)
        t = rng.integers(0, 4, 5)
        return (lambda v: softmax_cross_entropy(v, t)), x

    def pool3d(v):
        return max_pool3d(v, (2, 2, 2))

    def many(op):
        def build():
            rng = np.random.default_rng(9)
            xs = [_t(rng, 2, 3, 2) for _ in range(3)]
            w = Tensor(rng.standard_normal(op(xs).shape))
            return (lambda v: sum_all(mul(op(v), w))), xs
        return build

    return {
        "add": binary(add),
        "sub": binary(sub),
        "mul": binary(mul),
        "scale": unary(lambda v: scale(v, -1.7), 3, 4),
        "matmul": matmul_case,
        "add_bias": add_bias_case,
        "sum": unary(lambda v: scale(sum_all(v), 1.0), 3, 4),
        "reshape": unary(lambda v: reshape(v, (6, 2)), 3, 4),
        "take": unary(lambda v: take(v, 1, axis=1), 2, 3, 2),
        "slice": unary(lambda v: slice_axis(v, 1, 3, axis=1), 2, 4, 2),
        "concat": many(lambda xs: concat(xs, axis=1)),
        "stack": many(lambda xs: stack(xs, axis=1)),
        "sorted_mean": unary(lambda v: sorted_mean(v, axis=1), 2, 4, 3),
        "permute": unary(lambda v: permute(v, (2, 0, 1)), 2, 3, 4),
        "conv2d": conv(2),
        "conv3d": conv(3),
        "batchnorm": bn,
        "relu": unary(relu, 4, 5),
        "sigmoid": unary(sigmoid, 4, 5),
        "tanh": unary(tanh, 4, 5),
        "max_pool2d": unary(lambda v: max_pool2d(v, 2), 2, 2, 4, 4),
        "max_pool3d": unary(pool3d, 1, 2, 4, 4, 4),
        "global_avg_pool": unary(global_avg_pool, 2, 3, 3, 3),
        "dropout": unary(lambda v: dropout(v, 0.3, "train", seed=11), 4, 5),
        "softmax_cross_entropy": ce_case,
    }


PRIMITIVE_CASES = _primitive_cases()

# small configurations of each family; T and widths kept tiny so central differences are cheap
FAMILY_SPECS = {
    "rnn": dict(T=3, hidden=3),
    "lstm": dict(T=3, hidden=3),
    "hier": dict(T=4),
    "tad": dict(T=3, K=2),
    "mean": dict(T=3),
}


def family_case(name: str) -> tuple:
    """Loss of a miniature model as a function of all its parameters.

    Batch-norm runs in eval mode with non-trivial running statistics: in train
    mode a bias feeding batch-norm has an identically zero gradient, which
    turns the relative error into a ratio of rounding noise.
    """
    spec = EncoderSpec.from_name(name, frame_size=8, base_channels=(2, 3, 3), hier_channels=(2, 2, 2),
                                 dropout=0.0, **FAMILY_SPECS[name])
    model = VideoModel(spec, seed=3)
    rng = np.random.default_rng(12)
    for p in model.layer_params().values():
        for t in p.tensors().values():
            t.data = t.data + 0.1 * rng.standard_normal(t.shape)
    for p in model.batchnorm_layers().values():
        c = p.scale.shape[0]
        p.running_mean = 0.3 * rng.standard_normal(c)
        p.running_var = rng.uniform(0.5, 2.0, c)
    x = Tensor(rng.uniform(0.0, 1.0, (2, spec.T, 1, 8, 8)))
    targets = np.array([0, 1])
    return (lambda v: softmax_cross_entropy(model(x, mode="eval"), targets)), model.parameters()


def check_primitive(name: str, eps: float = EPS) -> CheckResult:
    if name not in PRIMITIVE_CASES:
        raise KeyError(f"no gradient check registered for primitive {name!r}")
    t0 = time.perf_counter()
    f, x = PRIMITIVE_CASES[name]()
    return CheckResult(name, grad_check(f, x, eps), time.perf_counter() - t0)


def check_family(name: str, eps: float = EPS) -> CheckResult:
    t0 = time.perf_counter()
    f, x = family_case(name)
    return CheckResult(f"encoder:{name}", grad_check(f, x, eps), time.perf_counter() - t0)


def run_suite(eps: float = EPS) -> list[CheckResult]:
    """Every registered primitive, then every encoder family. Missing cases are an error."""
    missing = sorted(set(PRIMITIVES) - set(PRIMITIVE_CASES))
    if missing:
        raise KeyError(f"primitives without a gradient check: {missing}")
    results = [check_primitive(name, eps) for name in sorted(PRIMITIVES)]
    results += [check_family(name, eps) for name in FAMILY_SPECS]
    return results
