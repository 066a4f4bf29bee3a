"""Differentiable computation core: tensors, primitives, gradient checks."""

from .tensor import (
    NonFiniteError,
    Tensor,
    as_tensor,
    constant,
    finite_checks,
    grad_enabled,
    no_grad,
)
from .ops import (
    absolute,
    add,
    avg_pool_depth,
    avg_pool_spatial,
    batch_norm_eval,
    batch_norm_train,
    clamp,
    concat,
    conv2d,
    cos,
    div,
    exp,
    gather_lastdim,
    getitem,
    grid_sample_bilinear,
    index_axis,
    log,
    lookup_depth_linear,
    matmul,
    mean,
    mul,
    neg,
    pad_zero2d,
    relu,
    replicate_pad2d,
    reshape,
    sigmoid,
    sin,
    softmax_lastdim,
    sqrt,
    sub,
    sum_,
    tanh,
    transpose,
    upsample_bilinear,
    upsample_nearest,
    where,
)
from .gradcheck import finite_difference_check, loss_gradient_check

__all__ = [name for name in dir() if not name.startswith("_")]
