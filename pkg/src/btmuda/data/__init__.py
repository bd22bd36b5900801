"""Synthetic benchmark generation, dataset IO, batching, augmentation."""

from .augment import AugmentConfig, augment_sample, crop_resize, hflip, jitter, rotate
from .dataset import (Batch, Dataset, batch_indices, load_domain_dir,
                      sample_batches, write_domain_dir)
from .synth import DomainSpec, SynthConfig, gen_domain, make_domain_specs

__all__ = [
    "AugmentConfig", "augment_sample", "hflip", "rotate", "crop_resize", "jitter",
    "Batch", "Dataset", "batch_indices", "sample_batches",
    "write_domain_dir", "load_domain_dir",
    "DomainSpec", "SynthConfig", "gen_domain", "make_domain_specs",
]
