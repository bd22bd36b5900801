"""Bi-level multi-source unsupervised domain adaptation, desk scale.

A numpy/scipy implementation of a two-path (CNN + three-branch Transformer)
feature extractor trained with distillation, consistency, kernel two-sample
(MMD), restriction, and classification losses on a synthetic multi-domain
image benchmark.  Everything is deterministic given a seed, gradient-checked
against finite differences, and runs on a desktop CPU.
"""

import os as _os

# BTMUDA_THREADS caps BLAS/OpenMP parallelism.  The backing libraries read
# these variables when numpy first loads, so they are propagated here — before
# any submodule import — and only where the user has not already set them.
_threads = _os.environ.get("BTMUDA_THREADS", "").strip()
if _threads.isdigit() and int(_threads) >= 1:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                 "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS"):
        _os.environ.setdefault(_var, _threads)
del _os, _threads

__version__ = "0.1.0"
