"""Minimal dense tensors with reverse-mode gradients, plus Adam."""

from .gradcheck import finite_diff_check, gradient_probes, relative_error
from .params import ParamStore, adam_update, init_mlp, mlp_forward, mlp_params
from .tensor import (
    Tensor,
    add,
    as_tensor,
    concat,
    const_matmul,
    cosine_rows,
    div,
    exp,
    getitem,
    is_debug,
    log,
    matmul,
    mean,
    mul,
    neg,
    no_grad,
    power,
    relu,
    reshape,
    segment_sum,
    set_debug,
    softmax,
    sqrt,
    square,
    stack,
    sub,
    swap_last,
    take_rows,
    tanh,
    transpose,
    tsum,
)

__all__ = [
    "ParamStore", "Tensor", "adam_update", "add", "as_tensor", "concat", "const_matmul",
    "cosine_rows", "div", "exp", "finite_diff_check", "getitem", "gradient_probes",
    "init_mlp", "is_debug", "log", "matmul", "mean", "mlp_forward", "mlp_params", "mul",
    "neg", "no_grad", "power", "relative_error", "relu", "reshape", "segment_sum",
    "set_debug", "softmax", "sqrt", "square", "stack", "sub", "swap_last", "take_rows",
    "tanh", "transpose", "tsum",
]
