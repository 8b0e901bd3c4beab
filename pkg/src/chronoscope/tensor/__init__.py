"""Minimal float64 tensor library with reverse-mode autodiff."""
from .core import (
    PRIMITIVES,
    ShapeError,
    Tape,
    Tensor,
    add,
    add_bias,
    backward,
    concat,
    concat_channels,
    create,
    flatten,
    get_tape,
    matmul,
    mul,
    no_grad,
    permute,
    reshape,
    scale,
    set_debug,
    slice_axis,
    sorted_mean,
    stack,
    sub,
    sum_all,
    take,
)
from .gradcheck import analytic_grad, grad_check, numerical_grad
from .nn import (
    LOCAL_DERIVATIVES,
    LayerParams,
    activation,
    batchnorm,
    conv2d,
    conv3d,
    dropout,
    global_avg_pool,
    linear,
    log_softmax,
    max_pool2d,
    max_pool3d,
    pool,
    relu,
    sigmoid,
    softmax_cross_entropy,
    tanh,
)

__all__ = [
    "LOCAL_DERIVATIVES", "LayerParams", "PRIMITIVES", "ShapeError", "Tape", "Tensor", "activation",
    "add", "add_bias", "analytic_grad", "backward", "batchnorm", "concat", "concat_channels",
    "conv2d", "conv3d", "create", "dropout", "flatten", "get_tape", "global_avg_pool", "grad_check",
    "linear", "log_softmax", "matmul", "max_pool2d", "max_pool3d", "mul", "no_grad",
    "numerical_grad", "permute", "pool", "relu", "reshape", "scale", "set_debug", "sigmoid",
    "slice_axis", "softmax_cross_entropy", "sorted_mean", "stack", "sub", "sum_all", "take", "tanh",
]
