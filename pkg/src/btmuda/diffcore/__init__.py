"""Differentiable computation substrate: tensors, gradients, SGD, checkpoints."""

from .checkpoint import (check_shapes, deserialize, load_checkpoint,
                         save_checkpoint, serialize)
from .gradcheck import GradCheckReport, grad_check
from .optim import OptimConfig, annealed_lr, sgd_step
from .params import ParamStore, fanin_normal, rng_for, small_normal, trunc_normal
from .tensor import (Tensor, absolute, add, backward, concat, conv2d,
                     cross_entropy, exp, gelu, layernorm, log, log_softmax,
                     matmul, maximum_scalar, mul, neg, reduce_mean, reduce_sum,
                     relu, reshape, softmax, take, transpose)

__all__ = [
    "Tensor", "backward",
    "add", "mul", "neg", "absolute", "exp", "log", "relu", "gelu",
    "maximum_scalar", "reshape", "transpose", "take", "concat",
    "reduce_sum", "reduce_mean", "matmul", "softmax", "log_softmax",
    "layernorm", "conv2d", "cross_entropy",
    "ParamStore", "rng_for", "trunc_normal", "fanin_normal", "small_normal",
    "OptimConfig", "annealed_lr", "sgd_step",
    "serialize", "deserialize", "save_checkpoint", "load_checkpoint", "check_shapes",
    "GradCheckReport", "grad_check",
]
