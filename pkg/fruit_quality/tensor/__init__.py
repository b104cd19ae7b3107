"""
Dense tensors, differentiable operators and reverse-mode gradients.
"""

from .ops import (
    activation,
    add,
    bilinear_resize,
    clip,
    concat,
    conv2d,
    conv2d_transpose,
    dense,
    embedding,
    flatten,
    leaky_relu,
    log,
    maxpool2d,
    mean,
    mul,
    relu,
    reduce_sum,
    reshape,
    scale,
    sigmoid,
    sub,
    tanh,
)
from .tape import Tape, active_tape, backward
from .tensor import FLOAT32, FLOAT64, Tensor, as_tensor

__all__ = [
    "FLOAT32",
    "FLOAT64",
    "Tape",
    "Tensor",
    "activation",
    "active_tape",
    "add",
    "as_tensor",
    "backward",
    "bilinear_resize",
    "clip",
    "concat",
    "conv2d",
    "conv2d_transpose",
    "dense",
    "embedding",
    "flatten",
    "leaky_relu",
    "log",
    "maxpool2d",
    "mean",
    "mul",
    "relu",
    "reduce_sum",
    "reshape",
    "scale",
    "sigmoid",
    "sub",
    "tanh",
]
