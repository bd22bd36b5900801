"""The five training losses and their weighted combination.

* distillation — soft cross-entropy from the (detached) source-target branch
  teacher onto the target branch student, through the shared distillation head;
* consistency — symmetrized KL between the two paths' predicted distributions,
  averaged over the M source domains plus the target;
* kernel two-sample (MMD) — multi-scale Gaussian-kernel maximum mean
  discrepancy between aligned source and target features, per (path, source);
* restriction — pairwise L1 disagreement among all 2M classifiers on target
  samples;
* classification — cross-entropy of every source classifier and of the fused
  prediction on labeled source batches.

total = alpha * distill + beta * consistency + lambda * (mmd + restriction)
        + classification.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffcore import tensor as dt
from .diffcore.tensor import Tensor
from .errors import ContractViolation

PROB_FLOOR = 1e-8
MMD_SCALES = (0.25, 0.5, 1.0, 2.0, 4.0)


@dataclass(frozen=True)
class KernelConfig:
    """Gaussian kernel family exp(-d^2 / (2 sigma_s^2)) over several scales.

    sigma_s = scale * base bandwidth.  The base bandwidth is the median
    pairwise distance of the joint batch (a detached statistic, recomputed
    per call) unless `bandwidth` pins it to a constant — pinning is what the
    finite-difference harness uses so the loss stays a fixed function of the
    parameters.
    """
    scales: tuple = MMD_SCALES
    bandwidth: float | None = None

    def base_bandwidth(self, x_data, y_data):
        if self.bandwidth is not None:
            if self.bandwidth <= 0:
                raise ContractViolation("KernelConfig.bandwidth must be positive")
            return float(self.bandwidth)
        joint = np.concatenate([x_data, y_data], axis=0)
        sq = np.sum(joint * joint, axis=1)
        d2 = sq[:, None] + sq[None, :] - 2.0 * (joint @ joint.T)
        iu = np.triu_indices(len(joint), k=1)
        median = float(np.median(np.sqrt(np.maximum(d2[iu], 0.0))))
        return median if median > 0 else 1.0


def _pairwise_sq_dists(x: Tensor, y: Tensor) -> Tensor:
    if x.shape[1] != y.shape[1]:
        raise ContractViolation(
            f"mmd: feature widths differ, {x.shape[1]} vs {y.shape[1]}")
    xs = (x * x).sum(axis=1, keepdims=True)                      # (n, 1)
    ys = dt.reshape((y * y).sum(axis=1), (1, y.shape[0]))        # (1, m)
    cross = dt.matmul(x, dt.transpose(y, (1, 0)))                # (n, m)
    return dt.maximum_scalar(xs + ys - 2.0 * cross, 0.0)


def mmd_squared(x: Tensor, y: Tensor, kernel: KernelConfig = KernelConfig()) -> Tensor:
    """Biased squared-MMD estimate, averaged over the kernel scales."""
    n, m = x.shape[0], y.shape[0]
    if n < 1 or m < 1:
        raise ContractViolation("mmd_squared: need at least one sample per side")
    if x.shape[1] != y.shape[1]:
        raise ContractViolation(
            f"mmd: feature widths differ, {x.shape[1]} vs {y.shape[1]}")
    base = kernel.base_bandwidth(x.data, y.data)
    d_xx = _pairwise_sq_dists(x, x)
    d_yy = _pairwise_sq_dists(y, y)
    d_xy = _pairwise_sq_dists(x, y)
    total = None
    for scale in kernel.scales:
        denom = -1.0 / (2.0 * (scale * base) ** 2)
        term = (dt.exp(d_xx * denom).sum() * (1.0 / (n * n))
                + dt.exp(d_yy * denom).sum() * (1.0 / (m * m))
                - dt.exp(d_xy * denom).sum() * (2.0 / (n * m)))
        total = term if total is None else total + term
    return total * (1.0 / len(kernel.scales))


def mmd_loss(aligned_src, aligned_tgt, kernel: KernelConfig = KernelConfig()) -> Tensor:
    """Mean over the 2M (path, source) pairs of aligned-feature squared MMD."""
    if len(aligned_src) != len(aligned_tgt) or not aligned_src:
        raise ContractViolation("mmd_loss: source/target pair lists must match")
    total = None
    for xs, xt in zip(aligned_src, aligned_tgt):
        term = mmd_squared(xs, xt, kernel)
        total = term if total is None else total + term
    return total * (1.0 / len(aligned_src))


def teacher_probs(logits) -> np.ndarray:
    """Detached softmax of teacher logits (plain array, so no gradient path)."""
    arr = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    shifted = arr - arr.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def distill_loss(teacher_logits_per_source, student_logits: Tensor) -> Tensor:
    """Soft cross-entropy from each source pairing's teacher onto the student.

    Teachers enter as logits (tensors or arrays) and are detached here; only
    the student side carries gradients.  Mean over batch, mean over sources.
    """
    if not teacher_logits_per_source:
        raise ContractViolation("distill_loss: no teacher logits given")
    log_student = dt.log_softmax(student_logits, axis=-1)
    total = None
    for teacher in teacher_logits_per_source:
        probs = teacher_probs(teacher).astype(log_student.dtype)
        term = dt.reduce_mean((log_student * Tensor(-probs)).sum(axis=-1))
        total = term if total is None else total + term
    return total * (1.0 / len(teacher_logits_per_source))


def _kl(p: Tensor, q: Tensor) -> Tensor:
    """Per-sample KL(p || q) with probabilities clamped to PROB_FLOOR."""
    pc = dt.maximum_scalar(p, PROB_FLOOR)
    qc = dt.maximum_scalar(q, PROB_FLOOR)
    return (pc * (dt.log(pc) - dt.log(qc))).sum(axis=-1)


def symmetrized_kl(p: Tensor, q: Tensor) -> Tensor:
    """Batch-mean of (KL(p||q) + KL(q||p)) / 2."""
    return dt.reduce_mean(_kl(p, q) + _kl(q, p)) * 0.5


def consistency_loss(path1_probs, path2_probs) -> Tensor:
    """Mean symmetrized KL between the paths over the M+1 domains."""
    if len(path1_probs) != len(path2_probs) or not path1_probs:
        raise ContractViolation("consistency_loss: need matching per-domain prob lists")
    total = None
    for p, q in zip(path1_probs, path2_probs):
        term = symmetrized_kl(p, q)
        total = term if total is None else total + term
    return total * (1.0 / len(path1_probs))


def restriction_loss(classifier_probs) -> Tensor:
    """Pairwise L1 disagreement of the 2M classifiers on target samples.

    Sum over unordered classifier pairs of the class-summed absolute
    difference, batch-averaged, divided by the pair count M(2M-1).
    """
    n = len(classifier_probs)
    if n < 2:
        raise ContractViolation("restriction_loss: need at least two classifiers")
    total = None
    pairs = 0
    for a in range(n):
        for b in range(a + 1, n):
            diff = dt.reduce_mean(
                dt.absolute(classifier_probs[a] - classifier_probs[b]).sum(axis=-1))
            total = diff if total is None else total + diff
            pairs += 1
    return total * (1.0 / pairs)


def restriction_pair_count(m_sources):
    return m_sources * (2 * m_sources - 1)


def one_hot(labels, n_classes=2):
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ContractViolation(f"one_hot: labels must be 1-D, got {labels.shape}")
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ContractViolation(f"one_hot: labels outside 0..{n_classes - 1}")
    out = np.zeros((len(labels), n_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def classification_loss(source_logits_by_pair, fused_logits_by_source,
                        labels_by_source) -> Tensor:
    """Cross-entropy of each source classifier plus the fused head.

    `source_logits_by_pair` maps (k, j) to the logits of classifier (k, j) on
    source-j's batch; `fused_logits_by_source[j]` holds the fusion head's
    logits on the same batch.  Natural log, batch-averaged, normalized by the
    number of active (path, source) pairs — 2M when both paths run.
    """
    if not source_logits_by_pair:
        raise ContractViolation("classification_loss: no classifier outputs")
    total = None
    for (k, j), logits in sorted(source_logits_by_pair.items()):
        onehot = one_hot(labels_by_source[j]).astype(logits.dtype)
        term = (dt.reduce_mean(dt.cross_entropy(logits, onehot))
                + dt.reduce_mean(dt.cross_entropy(fused_logits_by_source[j], onehot)))
        total = term if total is None else total + term
    return total * (1.0 / len(source_logits_by_pair))


@dataclass
class LossBundle:
    """One step's loss components, schedule weights, and their combination."""
    distill: float
    consistency: float
    mmd: float
    restriction: float
    classification: float
    alpha: float
    beta: float
    lam: float
    total: float

    def recombine(self):
        return (self.alpha * self.distill + self.beta * self.consistency
                + self.lam * (self.mmd + self.restriction) + self.classification)


def combine(l_dtl: Tensor, l_con: Tensor, l_mmd: Tensor, l_rest: Tensor,
            l_cls: Tensor, alpha, beta, lam) -> Tensor:
    """alpha*distill + beta*consistency + lambda*(mmd+restriction) + classification."""
    return (l_dtl * float(alpha) + l_con * float(beta)
            + (l_mmd + l_rest) * float(lam) + l_cls)
