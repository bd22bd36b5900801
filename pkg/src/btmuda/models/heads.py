"""Alignment modules, per-source classifiers, and the shared heads.

For M source domains and the two extractor paths (path 1 = CNN, path 2 =
transformer) there are 2M alignment modules A^k_j and 2M matching classifiers
C^k_j, indexed by the flat position (k-1)*M + j in 1..2M.  Two heads are
shared across everything: the distillation head on transformer class-token
features, and the fusion head on the concatenation of all 2M aligned feature
vectors — the sole head used at inference time.
"""

from __future__ import annotations

from ..diffcore import tensor as T
from ..diffcore.params import ParamStore, fanin_normal, rng_for, small_normal
from ..diffcore.tensor import Tensor
from ..errors import ContractViolation

N_CLASSES = 2


def flat_index(k, j, m_sources):
    """Flat classifier position (k-1)*M + j for path k in {1,2}, source j in 1..M."""
    if k not in (1, 2):
        raise ContractViolation(f"path index k must be 1 or 2, got {k}")
    if not 1 <= j <= m_sources:
        raise ContractViolation(f"source index j={j} outside 1..{m_sources}")
    return (k - 1) * m_sources + j


def pair_order(m_sources):
    """All (k, j) pairs in flat-index order 1..2M."""
    return [(k, j) for k in (1, 2) for j in range(1, m_sources + 1)]


def param_shapes(m_sources, d_f, d_model, d_a):
    shapes = {}
    for k, j in pair_order(m_sources):
        din = d_f if k == 1 else d_model
        shapes[f"heads/align/{k}_{j}/w"] = (din, d_a)
        shapes[f"heads/align/{k}_{j}/b"] = (d_a,)
        shapes[f"heads/cls/{k}_{j}/w"] = (d_a, N_CLASSES)
        shapes[f"heads/cls/{k}_{j}/b"] = (N_CLASSES,)
    shapes["heads/distill/w"] = (d_model, N_CLASSES)
    shapes["heads/distill/b"] = (N_CLASSES,)
    shapes["heads/fusion/w"] = (2 * m_sources * d_a, N_CLASSES)
    shapes["heads/fusion/b"] = (N_CLASSES,)
    return shapes


def init_params(store: ParamStore, m_sources, d_f, d_model, d_a, seed):
    for name, shape in param_shapes(m_sources, d_f, d_model, d_a).items():
        rng = rng_for(seed, "init", name)
        if name.endswith("/w"):
            store.add(name, fanin_normal(rng, shape, shape[0]))
        else:
            store.add(name, small_normal(rng, shape))


def align(features: Tensor, k, j, store: ParamStore, m_sources) -> Tensor:
    """Path-k features -> aligned features (batch, d_a): affine then ReLU."""
    flat_index(k, j, m_sources)  # validates the indices
    w = store[f"heads/align/{k}_{j}/w"]
    if features.shape[-1] != w.shape[0]:
        raise ContractViolation(
            f"align({k},{j}): features of width {features.shape[-1]} "
            f"fed to a {w.shape[0]}-wide module")
    return T.relu(T.matmul(features, w) + store[f"heads/align/{k}_{j}/b"])


def classify(aligned: Tensor, k, j, store: ParamStore, m_sources) -> Tensor:
    """Aligned features -> class logits for classifier (k, j)."""
    flat_index(k, j, m_sources)
    return T.matmul(aligned, store[f"heads/cls/{k}_{j}/w"]) + store[f"heads/cls/{k}_{j}/b"]


def distill_logits(transformer_features: Tensor, store: ParamStore) -> Tensor:
    """Class-token features -> logits of the single shared distillation head."""
    return T.matmul(transformer_features, store["heads/distill/w"]) + store["heads/distill/b"]


def fuse_predict(aligned_by_flat, store: ParamStore, m_sources) -> Tensor:
    """Concatenate the 2M aligned vectors in flat order and apply the fusion head."""
    if len(aligned_by_flat) != 2 * m_sources:
        raise ContractViolation(
            f"fuse_predict: need {2 * m_sources} aligned feature blocks, "
            f"got {len(aligned_by_flat)}")
    fused = T.concat(list(aligned_by_flat), axis=1)
    if fused.shape[-1] != store["heads/fusion/w"].shape[0]:
        raise ContractViolation(
            f"fuse_predict: concatenated width {fused.shape[-1]} "
            f"vs fusion head input {store['heads/fusion/w'].shape[0]}")
    return T.matmul(fused, store["heads/fusion/w"]) + store["heads/fusion/b"]
