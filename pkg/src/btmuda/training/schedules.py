"""Loss-weight schedules over training progress.

beta ramps up along a Gaussian-shaped curve that tops out at beta_max when
training ends; lambda follows a sigmoid ramp from 0 toward 1, steepness
theta.  alpha stays constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractViolation


@dataclass(frozen=True)
class ScheduleConfig:
    alpha: float = 1.0
    beta_max: float = 0.5
    delta: float = 0.65
    theta: float = 10.0
    iter_total: int = 2000

    def __post_init__(self):
        if self.iter_total < 0:
            raise ContractViolation("ScheduleConfig.iter_total must be >= 0")
        if self.beta_max <= 0 or self.delta <= 0 or self.theta <= 0:
            raise ContractViolation("ScheduleConfig: beta_max, delta, theta must be positive")


def beta_schedule(e, iter_total, beta_max=0.5, delta=0.65):
    """beta_max * exp(-delta * (1 - e/iter_total)^2); increasing, tops at beta_max."""
    if not 0 <= e <= max(iter_total, 1):
        raise ContractViolation(f"beta_schedule: step {e} outside [0, {iter_total}]")
    progress = e / iter_total if iter_total else 1.0
    return float(beta_max * np.exp(-delta * (1.0 - progress) ** 2))


def lambda_schedule(p, theta=10.0):
    """2 / (1 + exp(-theta*p)) - 1: zero at p=0, saturating toward 1."""
    if not 0.0 <= p <= 1.0:
        raise ContractViolation(f"lambda_schedule: progress {p} outside [0, 1]")
    return float(2.0 / (1.0 + np.exp(-theta * p)) - 1.0)
