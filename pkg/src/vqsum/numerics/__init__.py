"""Minimal dense-tensor engine with reverse-mode gradients."""

from .checkpoint import load_checkpoint, save_checkpoint
from .engine import (
    GradTape,
    SgFreeze,
    Tensor,
    add,
    affine,
    conv1d,
    cross_entropy,
    embedding_lookup,
    flip,
    freeze_stop_gradients,
    gelu,
    l2_norm_sq,
    layer_norm,
    matmul,
    mul,
    reshape,
    select,
    softmax,
    stop_gradient,
    straight_through,
    sub,
    suppress_finite_checks,
    tensor_mean,
    tensor_sum,
    transpose,
)
from .gradcheck import grad_check

__all__ = [
    "GradTape",
    "SgFreeze",
    "Tensor",
    "add",
    "affine",
    "conv1d",
    "cross_entropy",
    "embedding_lookup",
    "flip",
    "freeze_stop_gradients",
    "gelu",
    "grad_check",
    "l2_norm_sq",
    "layer_norm",
    "load_checkpoint",
    "matmul",
    "mul",
    "reshape",
    "save_checkpoint",
    "select",
    "softmax",
    "stop_gradient",
    "straight_through",
    "sub",
    "suppress_finite_checks",
    "tensor_mean",
    "tensor_sum",
    "transpose",
]
