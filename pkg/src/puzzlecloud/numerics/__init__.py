"""Minimal float64 autodiff engine: tensors, layers, optimizers."""

from .tensor import (
    Tensor,
    add,
    as_tensor,
    batch_standardize,
    concat_global,
    dropout,
    linear,
    max_over_points,
    relu,
    reshape,
    scale,
    softmax_cross_entropy,
)
from .params import GROUPS, ModelParams, Parameter, he_uniform, param_rng
from .optim import OptimizerState, adam, optimizer_step, sgd_momentum
from .gradcheck import gradient_check, relative_error

__all__ = [
    "Tensor", "add", "as_tensor", "batch_standardize", "concat_global", "dropout", "linear",
    "max_over_points", "relu", "reshape", "scale", "softmax_cross_entropy",
    "GROUPS", "ModelParams", "Parameter", "he_uniform", "param_rng",
    "OptimizerState", "adam", "optimizer_step", "sgd_momentum",
    "gradient_check", "relative_error",
]
