"""Finite-difference verification of the full training loss.

Builds a deliberately tiny model in 64-bit mode, freezes everything the
training loss treats as a constant — the distillation teacher's logits and
the kernel bandwidth — and checks each loss component plus their weighted
total against central differences.
"""

from __future__ import annotations

import numpy as np

from ..data.dataset import Batch
from ..diffcore.gradcheck import GradCheckReport, grad_check
from ..diffcore.params import rng_for
from ..losses import KernelConfig, combine
from ..models.cnn import CnnConfig
from ..models.network import ModelConfig, init_model_params
from ..models.transformer import TransformerConfig
from .loop import compute_step_losses
from .presets import get_preset

TINY_TOL = 1e-4
# fixed, nonzero weights so the total exercises every component's gradient
_CHECK_WEIGHTS = dict(alpha=1.0, beta=0.3, lam=0.7)

COMPONENTS = ("distill", "consistency", "mmd", "restriction", "classification")


def tiny_setup(seed=0, batch=2, m_sources=2):
    """A 4x4-image model small enough to finite-difference in seconds.

    Two transformer layers, not one: the class token entering layer 1 is
    image-independent, so a single layer leaves the source-target branch's
    class-token feature identical to the target branch's and the distillation
    gradient vanishes identically — one more layer makes the check meaningful.
    """
    model_cfg = ModelConfig(
        m_sources=m_sources, image_size=4, d_a=8,
        cnn=CnnConfig(widths=(4, 8), d_f=8),
        vit=TransformerConfig(patch_size=2, d_model=8, n_heads=2, n_layers=2))
    store = init_model_params(model_cfg, seed, dtype=np.float64)
    src_batches = []
    for j in range(1, m_sources + 1):
        rng = rng_for(seed, "gradcheck/data", j)
        images = rng.random((batch, 4, 4))
        labels = rng.integers(0, 2, size=batch)
        src_batches.append(Batch(images, labels, f"S{j}"))
    rng = rng_for(seed, "gradcheck/data", "target")
    tgt_batch = Batch(rng.random((batch, 4, 4)), None, "T")
    return model_cfg, store, src_batches, tgt_batch


def run_gradcheck(seed=0, h=1e-5, max_checks=250, preset_name="exp10"):
    """Check every loss component and the weighted total on the tiny model.

    Returns {component: GradCheckReport, ..., "total": GradCheckReport}.
    """
    model_cfg, store, src_batches, tgt_batch = tiny_setup(seed)
    preset = get_preset(preset_name)
    kernel = KernelConfig(bandwidth=1.0)

    # freeze the teacher at the unperturbed parameters so the checked loss
    # is an exact function of the parameters being perturbed
    _, teachers = compute_step_losses(store, model_cfg, preset, src_batches,
                                      tgt_batch, kernel)

    def component_fn(name):
        def fn(s):
            comps, _ = compute_step_losses(s, model_cfg, preset, src_batches,
                                           tgt_batch, kernel,
                                           teacher_override=teachers)
            return comps[name]
        return fn

    def total_fn(s):
        comps, _ = compute_step_losses(s, model_cfg, preset, src_batches,
                                       tgt_batch, kernel,
                                       teacher_override=teachers)
        return combine(comps["distill"], comps["consistency"], comps["mmd"],
                       comps["restriction"], comps["classification"],
                       _CHECK_WEIGHTS["alpha"], _CHECK_WEIGHTS["beta"],
                       _CHECK_WEIGHTS["lam"])

    reports: dict[str, GradCheckReport] = {}
    for name in COMPONENTS:
        reports[name] = grad_check(component_fn(name), store, h=h,
                                   max_checks=max_checks, sample_seed=seed)
    reports["total"] = grad_check(total_fn, store, h=h,
                                  max_checks=max_checks, sample_seed=seed)
    return reports
