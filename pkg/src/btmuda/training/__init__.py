"""Schedules, presets, the training loop, and gradient verification."""

from .loop import (LOG_COLUMNS, compute_step_losses, format_log_row, train,
                   train_step)
from .presets import PRESETS, ExperimentPreset, get_preset
from .schedules import ScheduleConfig, beta_schedule, lambda_schedule
from .verify import run_gradcheck, tiny_setup, COMPONENTS, TINY_TOL

__all__ = [
    "LOG_COLUMNS", "compute_step_losses", "format_log_row", "train", "train_step",
    "PRESETS", "ExperimentPreset", "get_preset",
    "ScheduleConfig", "beta_schedule", "lambda_schedule",
    "run_gradcheck", "tiny_setup", "COMPONENTS", "TINY_TOL",
]
