#!/usr/bin/env python3
"""The five losses, their frozen reference values, and the weight schedules.

Training optimizes

    total = alpha * distill + beta * consistency
            + lambda * (mmd + restriction) + classification

where alpha stays at 1, beta ramps along a Gaussian-shaped curve toward 0.5,
and lambda follows a sigmoid from 0 toward 1.  This script first checks a
few closed-form values each loss must reproduce, then evaluates all five on
real batches through an untrained two-path network, and finally prints the
schedules across training progress.

Runtime: a few seconds.
"""

import math

import numpy as np

from btmuda.data.dataset import sample_batches
from btmuda.data.synth import SynthConfig, gen_domain, make_domain_specs
from btmuda.diffcore.tensor import Tensor
from btmuda.losses import (KernelConfig, mmd_squared, restriction_loss,
                           symmetrized_kl)
from btmuda.models.cnn import CnnConfig
from btmuda.models.network import ModelConfig, init_model_params
from btmuda.models.transformer import TransformerConfig
from btmuda.training.loop import compute_step_losses
from btmuda.training.presets import get_preset
from btmuda.training.schedules import beta_schedule, lambda_schedule


def t64(values):
    return Tensor(np.asarray(values, dtype=np.float64))


def main():
    print("== closed-form reference values ==\n")
    cases = [
        ("symmetrized KL (.5,.5) vs (.25,.75)",
         float(symmetrized_kl(t64([[0.5, 0.5]]), t64([[0.25, 0.75]])).data),
         0.5 * (0.5 * math.log(4 / 3) - 0.25 * math.log(2)
                + 0.75 * math.log(1.5))),
        ("squared MMD, one pair at distance sqrt(2), sigma 1",
         float(mmd_squared(t64([[1.0, 0.0]]), t64([[0.0, 1.0]]),
                           KernelConfig(scales=(1.0,), bandwidth=1.0)).data),
         2.0 - 2.0 * math.exp(-1.0)),
        ("restriction, two classifiers (.3,.7) vs (.6,.4)",
         float(restriction_loss([t64([[0.3, 0.7]]), t64([[0.6, 0.4]])]).data),
         0.6),
    ]
    for name, got, want in cases:
        print(f"   {name}")
        print(f"      computed {got:.12f}   expected {want:.12f}   "
              f"diff {abs(got - want):.1e}")

    print("\n== all five losses on real batches (untrained network) ==\n")
    model_cfg = ModelConfig(m_sources=2, image_size=16, d_a=8,
                            cnn=CnnConfig(widths=(4, 8), d_f=8),
                            vit=TransformerConfig(patch_size=4, d_model=8,
                                                  n_heads=2, n_layers=2))
    synth_cfg = SynthConfig(m_sources=2, samples_per_domain=16, eval_samples=8,
                            image_size=16, seed=0)
    specs = make_domain_specs(synth_cfg)
    sources = [gen_domain(synth_cfg, s) for s in specs[:-1]]
    target = gen_domain(synth_cfg, specs[-1]).without_labels()
    src_batches, tgt_batch = sample_batches(sources, target, 8, seed=0, step=0)
    store = init_model_params(model_cfg, seed=0)
    components, _ = compute_step_losses(store, model_cfg, get_preset("exp10"),
                                        src_batches, tgt_batch)
    for name, value in components.items():
        print(f"   {name:<16} {float(value.data):.6f}")
    print("\n   (classification starts near 2 ln 2 = 1.3863: each pair adds"
          "\n    its classifier's cross-entropy plus the fused head's, and an"
          "\n    untrained binary classifier sits at ln 2 apiece)")

    print("\n== the weight schedules across training progress ==\n")
    total = 2000
    print(f"   {'progress':>10} {'beta':>10} {'lambda':>10}")
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        e = int(frac * total)
        print(f"   {frac:>10.2f} {beta_schedule(e, total):>10.6f} "
              f"{lambda_schedule(frac):>10.6f}")
    print("\nbeta starts at 0.5 e^{-0.65} = 0.261023 and tops out at exactly")
    print("0.5; lambda starts at exactly 0 so the alignment terms cannot")
    print("destabilize the early classifier, then saturates toward 1")
    print("(0.999909 at the end).")


if __name__ == "__main__":
    main()
