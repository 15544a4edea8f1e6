"""Minimal float64 reverse-mode kernel for the two networks in this package."""
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import grad_check, numeric_grad, relative_error
from .layers import (
    attention_mul,
    ccc_loss,
    depthwise_causal_conv,
    dropout,
    linear,
    lstm,
    mse,
    prelu,
    rmse_loss,
    shift_right,
    sigmoid,
    softmax,
)
from .optim import AdamState, adam_step, clip_grad_norm
from .tensor import NonFiniteError, Tensor, add, as_tensor, mul, sqrt, square, tanh, tsum

__all__ = [
    "AdamState",
    "NonFiniteError",
    "Tensor",
    "adam_step",
    "add",
    "as_tensor",
    "attention_mul",
    "ccc_loss",
    "clip_grad_norm",
    "depthwise_causal_conv",
    "dropout",
    "grad_check",
    "linear",
    "load_checkpoint",
    "lstm",
    "mse",
    "mul",
    "numeric_grad",
    "prelu",
    "relative_error",
    "rmse_loss",
    "save_checkpoint",
    "shift_right",
    "sigmoid",
    "softmax",
    "sqrt",
    "square",
    "tanh",
    "tsum",
]
