"""Inference, metrics (accuracy / AUC / F1), and report emission.

Inference runs only the target-side extractors: CNN features plus the plain
transformer stack, through every alignment module.  The fusion mode feeds
their concatenation to the fusion head (the deployment path); the average
mode takes the mean softmax of the per-source classifiers instead.  Both
modes share one cached extractor pass.

Conventions, fixed for reproducibility: class 1 (the annulus) is the
positive class; argmax ties resolve to class 0; tied AUC scores count 0.5.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .data.dataset import Dataset
from .diffcore.params import ParamStore
from .diffcore.tensor import Tensor, no_grad, softmax
from .errors import ContractViolation, DataError, MissingLabelsError
from .models import cnn as cnn_mod
from .models import heads as heads_mod
from .models import transformer as vit_mod
from .models.network import ModelConfig
from .training.presets import ExperimentPreset

EVAL_BATCH = 64
PER_SAMPLE_COLUMNS = ("id", "p_class1", "prediction", "label")
REPORT_COLUMNS = ("acc_percent", "auc", "f1", "n", "mode")


@dataclass
class EvalFeatures:
    """One extractor pass over a dataset, shared by both inference modes."""
    concat: np.ndarray               # (n, 2M*d_a) fusion-head input, zero blocks
    fused_probs: np.ndarray          # (n, C) softmax of the fusion head
    classifier_probs: dict           # (k, j) -> (n, C) softmax per classifier


@dataclass
class MetricsReport:
    acc_percent: float
    auc: float
    f1: float
    n: int
    mode: str
    ids: np.ndarray
    p_class1: np.ndarray
    predictions: np.ndarray
    labels: np.ndarray


def compute_eval_features(images, store: ParamStore, model_cfg: ModelConfig,
                          preset: ExperimentPreset) -> EvalFeatures:
    """Aligned features and all head outputs for `images`, in small batches."""
    m = model_cfg.m_sources
    pairs_all = heads_mod.pair_order(m)
    active = preset.active_paths()
    chunks_concat, chunks_fused = [], []
    chunks_cls = {pair: [] for pair in pairs_all if pair[0] in active}
    with no_grad():
        for lo in range(0, len(images), EVAL_BATCH):
            batch = np.asarray(images[lo:lo + EVAL_BATCH], dtype=store.dtype)
            feats = {}
            if preset.use_cnn:
                feats[1] = cnn_mod.cnn_forward(batch, store, model_cfg.cnn)
            if preset.use_transformer:
                feats[2] = vit_mod.target_only_forward(batch, store, model_cfg.vit)
            blocks = []
            for k, j in pairs_all:
                if k not in active:
                    blocks.append(Tensor(np.zeros((len(batch), model_cfg.d_a),
                                                  dtype=store.dtype)))
                    continue
                aligned = heads_mod.align(feats[k], k, j, store, m)
                blocks.append(aligned)
                logits = heads_mod.classify(aligned, k, j, store, m)
                chunks_cls[(k, j)].append(softmax(logits).data)
            fused = heads_mod.fuse_predict(blocks, store, m)
            chunks_concat.append(np.concatenate([b.data for b in blocks], axis=1))
            chunks_fused.append(softmax(fused).data)
    return EvalFeatures(
        concat=np.concatenate(chunks_concat),
        fused_probs=np.concatenate(chunks_fused),
        classifier_probs={pair: np.concatenate(parts)
                          for pair, parts in chunks_cls.items()})


def infer_fusion(images, store, model_cfg, preset) -> np.ndarray:
    """Fusion-head probabilities for target images; rows on the simplex."""
    return compute_eval_features(images, store, model_cfg, preset).fused_probs


def infer_average(images, store, model_cfg, preset) -> np.ndarray:
    """Mean softmax over the per-source classifiers (the distillation and
    fusion heads do not participate)."""
    feats = compute_eval_features(images, store, model_cfg, preset)
    return _average_probs(feats)


def _average_probs(feats: EvalFeatures) -> np.ndarray:
    stacked = np.stack([feats.classifier_probs[pair]
                        for pair in sorted(feats.classifier_probs)])
    return stacked.mean(axis=0)


# -- metrics ---------------------------------------------------------------


def predictions_from_probs(probs):
    """Argmax decisions; exact ties resolve to the lower class index."""
    return np.argmax(probs, axis=1)


def metric_accuracy(probs, labels) -> float:
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise DataError("accuracy undefined on an empty sample set")
    return 100.0 * float(np.mean(predictions_from_probs(probs) == labels))


def metric_auc(scores, labels) -> float:
    """Mann-Whitney rank AUC of class-1 scores; tied scores count 0.5."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUC undefined: evaluation labels contain a single class")
    ranks = rankdata(scores, method="average")
    pos_rank_sum = float(ranks[labels == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def metric_f1(predictions, labels) -> float:
    """F1 of the positive class (class 1); 0 when precision+recall is 0."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    tp = int(np.sum((predictions == 1) & (labels == 1)))
    fp = int(np.sum((predictions == 1) & (labels == 0)))
    fn = int(np.sum((predictions == 0) & (labels == 1)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


# -- evaluation ------------------------------------------------------------


def report_from_probs(probs, labels, mode) -> MetricsReport:
    labels = np.asarray(labels)
    preds = predictions_from_probs(probs)
    return MetricsReport(
        acc_percent=metric_accuracy(probs, labels),
        auc=metric_auc(probs[:, 1], labels),
        f1=metric_f1(preds, labels),
        n=len(labels), mode=mode,
        ids=np.arange(len(labels)), p_class1=np.asarray(probs[:, 1], dtype=np.float64),
        predictions=preds, labels=labels)


def evaluate(dataset: Dataset, store, model_cfg, preset, mode="fusion",
             features: EvalFeatures | None = None) -> MetricsReport:
    """Score one labeled dataset in `mode` ("fusion" | "average").

    Pass a precomputed `features` to share one extractor pass across modes.
    """
    if mode not in ("fusion", "average"):
        raise ContractViolation(f"evaluate: unknown mode '{mode}'")
    if len(dataset) == 0:
        raise DataError("evaluate: dataset is empty")
    if dataset.labels is None:
        raise MissingLabelsError(
            f"evaluate: domain '{dataset.domain_id}' has no labels to score against")
    if features is None:
        features = compute_eval_features(dataset.images, store, model_cfg, preset)
    probs = features.fused_probs if mode == "fusion" else _average_probs(features)
    return report_from_probs(probs, dataset.labels, mode)


def write_per_sample_csv(report: MetricsReport, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PER_SAMPLE_COLUMNS)
        for i in range(report.n):
            writer.writerow([int(report.ids[i]), f"{report.p_class1[i]:.17g}",
                             int(report.predictions[i]), int(report.labels[i])])


def metrics_from_per_sample_csv(path, mode="fusion") -> MetricsReport:
    """Recompute the full report from an emitted per-sample table."""
    ids, p1, preds, labels = [], [], [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != list(PER_SAMPLE_COLUMNS):
            raise DataError(f"{path}: expected columns {PER_SAMPLE_COLUMNS}")
        for row in reader:
            ids.append(int(row["id"]))
            p1.append(float(row["p_class1"]))
            preds.append(int(row["prediction"]))
            labels.append(int(row["label"]))
    p1 = np.asarray(p1)
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise DataError(f"{path}: no rows")
    acc = 100.0 * float(np.mean(preds == labels))
    return MetricsReport(acc_percent=acc, auc=metric_auc(p1, labels),
                         f1=metric_f1(preds, labels), n=len(labels), mode=mode,
                         ids=np.asarray(ids), p_class1=p1,
                         predictions=preds, labels=labels)


def write_report_csv(report: MetricsReport, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_COLUMNS)
        writer.writerow([f"{report.acc_percent:.17g}", f"{report.auc:.17g}",
                         f"{report.f1:.17g}", report.n, report.mode])


def format_report_table(report: MetricsReport) -> str:
    header = f"{'metric':<12}{'value':>12}"
    rows = [header, "-" * len(header),
            f"{'ACC (%)':<12}{report.acc_percent:>12.2f}",
            f"{'AUC':<12}{report.auc:>12.4f}",
            f"{'F1':<12}{report.f1:>12.4f}",
            f"{'samples':<12}{report.n:>12d}",
            f"{'mode':<12}{report.mode:>12}"]
    return "\n".join(rows)


def export_features(dataset: Dataset, store, model_cfg, preset, path):
    """CSV of the fusion-head input per sample: id, domain, label, features.

    The feature columns are bit-exact copies of what `infer_fusion`
    concatenates internally (including zero blocks for disabled paths).
    """
    feats = compute_eval_features(dataset.images, store, model_cfg, preset)
    width = feats.concat.shape[1]
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "domain", "label"] + [f"f{c}" for c in range(width)])
        for i in range(len(dataset)):
            label = "" if dataset.labels is None else int(dataset.labels[i])
            row = [i, dataset.domain_id, label]
            row.extend(f"{v:.17g}" for v in feats.concat[i])
            writer.writerow(row)
    return path
