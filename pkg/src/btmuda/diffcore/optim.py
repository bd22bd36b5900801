"""Mini-batch SGD with momentum, weight decay, and annealed learning rate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractViolation
from .params import ParamStore


@dataclass(frozen=True)
class OptimConfig:
    lr: float = 0.001
    momentum: float = 0.9
    weight_decay: float = 0.0005
    anneal_a: float = 10.0
    anneal_b: float = 0.75

    def __post_init__(self):
        for field in ("lr", "anneal_a", "anneal_b"):
            if getattr(self, field) <= 0:
                raise ContractViolation(f"OptimConfig.{field} must be positive")
        if self.momentum < 0 or self.weight_decay < 0:
            raise ContractViolation("OptimConfig: momentum and weight_decay must be >= 0")


def annealed_lr(cfg: OptimConfig, progress):
    """lr0 / (1 + a*p)^b at training progress p in [0, 1]."""
    return cfg.lr / (1.0 + cfg.anneal_a * progress) ** cfg.anneal_b


def sgd_step(store: ParamStore, e, iter_total, cfg: OptimConfig):
    """One in-place momentum-SGD update from the gradients in `store`.

    v <- momentum*v + (grad + weight_decay*w);  w <- w - lr(p)*v.
    Parameters whose gradient slot is empty are left untouched (their loss
    terms were disabled this step), including their momentum buffers.
    """
    if not 0 <= e < max(iter_total, 1):
        raise ContractViolation(f"sgd_step: step {e} outside [0, {iter_total})")
    lr = store.dtype.type(annealed_lr(cfg, e / iter_total if iter_total else 0.0))
    momentum = store.dtype.type(cfg.momentum)
    decay = store.dtype.type(cfg.weight_decay)
    for name, param in store.items():
        grad = param.grad
        if grad is None:
            continue
        if grad.shape != param.data.shape:
            raise ContractViolation(
                f"sgd_step: gradient shape {grad.shape} != parameter shape "
                f"{param.data.shape} for '{name}'")
        buf = store.momentum[name]
        np.multiply(buf, momentum, out=buf)
        buf += grad + decay * param.data
        param.data = param.data - lr * buf
    store.step = e + 1
