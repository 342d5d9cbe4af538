"""A small reverse-mode automatic differentiation engine on numpy."""

from .ops import (
    SegmentIndex,
    concat,
    conv,
    conv1d_circular,
    conv2d_circular,
    elu,
    gather,
    leaky_relu,
    linear,
    matmul,
    mean,
    mse,
    power,
    reshape,
    scatter_sum,
    segment_softmax,
    stop_gradient,
    transpose,
)
from .ops import sum as reduce_sum
from .optim import Adam, AdamState, adam_step
from .tensor import Tape, Tensor, as_tensor, backward, current_tape

__all__ = [
    "Adam", "AdamState", "SegmentIndex", "Tape", "Tensor", "adam_step", "as_tensor",
    "backward", "concat", "conv", "conv1d_circular", "conv2d_circular", "current_tape",
    "elu", "gather", "leaky_relu", "linear", "matmul", "mean", "mse", "power", "reduce_sum",
    "reshape", "scatter_sum", "segment_softmax", "stop_gradient", "transpose",
]
