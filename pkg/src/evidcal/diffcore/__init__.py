"""Differentiable computation primitives.

Dense layers, elementwise ops, reductions, a reverse-mode gradient tape,
and the gamma-family special functions needed by the evidential losses.
"""

from .layers import MLP, Affine, check_gradients
from .special import active_backend, available_backends, log_beta, set_backend
from .tape import (
    Tape,
    Tensor,
    add,
    affine,
    clip,
    concat,
    constant,
    digamma,
    div,
    exp,
    exp_clip,
    lgamma,
    log,
    matmul,
    mean_,
    mul,
    pick,
    relu,
    select_rows,
    sqrt,
    sub,
    sum_,
    tanh,
    transpose,
)
from .special import digamma as digamma_value
from .special import lgamma as lgamma_value
from .special import trigamma

__all__ = [
    "MLP",
    "Affine",
    "Tape",
    "Tensor",
    "active_backend",
    "add",
    "affine",
    "available_backends",
    "check_gradients",
    "clip",
    "concat",
    "constant",
    "digamma",
    "digamma_value",
    "div",
    "exp",
    "exp_clip",
    "lgamma",
    "lgamma_value",
    "log",
    "log_beta",
    "matmul",
    "mean_",
    "mul",
    "pick",
    "relu",
    "select_rows",
    "set_backend",
    "sqrt",
    "sub",
    "sum_",
    "tanh",
    "transpose",
    "trigamma",
]
