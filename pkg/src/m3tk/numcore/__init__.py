"""Reverse-mode differentiable tensor core for the motion toolkit."""

from .gradcheck import finite_difference_gradient, sampled_finite_difference
from .optim import AdamState, CosineSchedule, adam_step, cosine_lr
from .tensor import (
    Tensor,
    add,
    as_tensor,
    backward,
    concat,
    conv1d,
    div,
    elementwise,
    getitem,
    matmul,
    mul,
    reshape,
    scale,
    softplus,
    square,
    sqrt,
    stack,
    stop_gradient,
    straight_through,
    sub,
    tanh,
    tmean,
    transpose,
    tsum,
    upsample_nearest,
    zero_grads,
)

__all__ = [
    "AdamState",
    "CosineSchedule",
    "Tensor",
    "adam_step",
    "add",
    "as_tensor",
    "backward",
    "concat",
    "conv1d",
    "cosine_lr",
    "div",
    "elementwise",
    "finite_difference_gradient",
    "getitem",
    "matmul",
    "mul",
    "reshape",
    "sampled_finite_difference",
    "scale",
    "softplus",
    "square",
    "sqrt",
    "stack",
    "stop_gradient",
    "straight_through",
    "sub",
    "tanh",
    "tmean",
    "transpose",
    "tsum",
    "upsample_nearest",
    "zero_grads",
]
