"""Minimal reverse-mode autodiff, feedforward nets and Adam."""

from .nn import ACTIVATIONS, Layer, Mlp, mlp_apply, mlp_forward, mlp_input_grad
from .optim import Adam, AdamState, NonFiniteGradientError, adam_step
from .serialize import ContainerError, ContainerVersionError, pack_params, unpack_params
from .tensor import (
    OPS,
    Gradients,
    ShapeError,
    Tape,
    TapeError,
    Tensor,
    abs_,
    add,
    as_tensor,
    backward,
    concat,
    div,
    exp,
    log,
    matmul,
    mean,
    mul,
    record,
    relu,
    reshape,
    scalar_mul,
    sigmoid,
    slice_,
    sqrt,
    square,
    stack,
    sub,
    sum_,
    tanh,
    trace,
    transpose,
)

__all__ = [name for name in dir() if not name.startswith("_")]
