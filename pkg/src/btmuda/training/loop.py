"""The training loop: one combined update per step over all source pairings.

Per step, in order: CNN features for every batch, the transformer pass (the
three-branch pairing or the plain stack, per preset), the distillation loss,
alignment features, the kernel two-sample (MMD) loss, all classifier
predictions, the restriction loss, the consistency loss, fused source
predictions, the classification loss — then a single annealed momentum-SGD
update on the weighted total.  Disabled components contribute exact zeros and
leave their private parameters untouched.

Everything is a pure function of (parameters, seed, step), so runs are
bit-reproducible and can resume from any checkpoint.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .. import losses as L
from ..data.augment import AugmentConfig, augment_sample
from ..data.dataset import Batch, sample_batches
from ..diffcore.optim import OptimConfig, annealed_lr, sgd_step
from ..diffcore.params import ParamStore, rng_for
from ..diffcore.tensor import Tensor, backward, softmax
from ..diffcore import checkpoint as ckpt
from ..errors import ConfigError, NumericError
from ..models import cnn as cnn_mod
from ..models import heads as heads_mod
from ..models import transformer as vit_mod
from ..models.network import ModelConfig, init_model_params, param_shapes
from .presets import ExperimentPreset
from .schedules import ScheduleConfig, beta_schedule, lambda_schedule

LOG_COLUMNS = ("iter", "L_dtl", "L_con", "L_mmd", "L_rest", "L_cls",
               "alpha", "beta", "lambda", "total", "lr")


def _zero(dtype):
    return Tensor(np.zeros((), dtype=dtype))


def _guard(name, fn):
    try:
        return fn()
    except NumericError as exc:
        raise NumericError(f"while computing the {name} loss: {exc}") from exc


def compute_step_losses(store: ParamStore, model_cfg: ModelConfig,
                        preset: ExperimentPreset, src_batches, tgt_batch: Batch,
                        kernel: L.KernelConfig | None = None,
                        teacher_override=None):
    """All loss components for one step's batches.

    Returns (components dict, teacher logits as arrays).  The teacher arrays
    are what the distillation loss detached this step; passing them back via
    `teacher_override` pins the teacher, which the finite-difference check
    uses to keep the loss a fixed function of the parameters.
    """
    m = model_cfg.m_sources
    if len(src_batches) != m:
        raise ConfigError(f"expected {m} source batches, got {len(src_batches)}")
    if tgt_batch.labels is not None:
        raise ConfigError("target batch carries labels — they must never reach training")
    kernel = kernel if kernel is not None else L.KernelConfig()
    dtype = store.dtype
    pairs = [(k, j) for k in preset.active_paths() for j in range(1, m + 1)]

    # path features per batch
    feats_src = {}          # (k, j) -> features of source-j batch under path k
    feats_tgt = {}          # k -> features of the target batch under path k
    if preset.use_cnn:
        for j, batch in enumerate(src_batches, start=1):
            feats_src[(1, j)] = cnn_mod.cnn_forward(batch.images, store, model_cfg.cnn)
        feats_tgt[1] = cnn_mod.cnn_forward(tgt_batch.images, store, model_cfg.cnn)

    teachers = None
    student_logits = None
    if preset.use_transformer:
        if preset.use_three_branch:
            fs, ft, fc = vit_mod.transformer_forward_multi(
                [b.images for b in src_batches], tgt_batch.images, store, model_cfg.vit)
            for j in range(1, m + 1):
                feats_src[(2, j)] = fs[j - 1]
            feats_tgt[2] = ft
            teachers = [heads_mod.distill_logits(f, store).data for f in fc]
            student_logits = heads_mod.distill_logits(ft, store)
        else:
            for j, batch in enumerate(src_batches, start=1):
                feats_src[(2, j)] = vit_mod.source_only_forward(
                    batch.images, store, model_cfg.vit)
            feats_tgt[2] = vit_mod.target_only_forward(
                tgt_batch.images, store, model_cfg.vit)

    if preset.use_distill:
        teacher_logits = teacher_override if teacher_override is not None else teachers
        l_dtl = _guard("distillation", lambda: L.distill_loss(teacher_logits, student_logits))
    else:
        l_dtl = _zero(dtype)

    # alignment features: each source batch through its own (k, j) module,
    # the target batch through every module
    aligned_src = {(k, j): heads_mod.align(feats_src[(k, j)], k, j, store, m)
                   for (k, j) in pairs}
    aligned_tgt = {(k, j): heads_mod.align(feats_tgt[k], k, j, store, m)
                   for (k, j) in pairs}

    if preset.use_mmd:
        l_mmd = _guard("MMD", lambda: L.mmd_loss(
            [aligned_src[p] for p in pairs], [aligned_tgt[p] for p in pairs], kernel))
    else:
        l_mmd = _zero(dtype)

    # classifier predictions
    src_logits = {(k, j): heads_mod.classify(aligned_src[(k, j)], k, j, store, m)
                  for (k, j) in pairs}
    tgt_probs = {(k, j): softmax(heads_mod.classify(aligned_tgt[(k, j)], k, j, store, m))
                 for (k, j) in pairs}

    if preset.use_rest:
        l_rest = _guard("restriction", lambda: L.restriction_loss(
            [tgt_probs[p] for p in pairs]))
    else:
        l_rest = _zero(dtype)

    if preset.use_con:
        path1, path2 = [], []
        for j in range(1, m + 1):
            path1.append(softmax(src_logits[(1, j)]))
            path2.append(softmax(src_logits[(2, j)]))
        mean_t = {}
        for k in (1, 2):
            acc = None
            for j in range(1, m + 1):
                acc = tgt_probs[(k, j)] if acc is None else acc + tgt_probs[(k, j)]
            mean_t[k] = acc * (1.0 / m)
        path1.append(mean_t[1])
        path2.append(mean_t[2])
        l_con = _guard("consistency", lambda: L.consistency_loss(path1, path2))
    else:
        l_con = _zero(dtype)

    # fused prediction per source batch: its features through all 2M modules,
    # flat order, zero blocks where a path is disabled
    fused_logits = {}
    for j, batch in enumerate(src_batches, start=1):
        blocks = []
        for k, j2 in heads_mod.pair_order(m):
            if k not in preset.active_paths():
                blocks.append(Tensor(np.zeros((len(batch.images), model_cfg.d_a), dtype=dtype)))
            elif j2 == j:
                blocks.append(aligned_src[(k, j)])
            else:
                blocks.append(heads_mod.align(feats_src[(k, j)], k, j2, store, m))
        fused_logits[j] = heads_mod.fuse_predict(blocks, store, m)

    labels = {j: batch.labels for j, batch in enumerate(src_batches, start=1)}
    l_cls = _guard("classification", lambda: L.classification_loss(
        src_logits, fused_logits, labels))

    components = {"distill": l_dtl, "consistency": l_con, "mmd": l_mmd,
                  "restriction": l_rest, "classification": l_cls}
    for name, comp in components.items():
        if not np.isfinite(comp.data).all():
            raise NumericError(f"the {name} loss is not finite")
    return components, teachers


def train_step(store: ParamStore, model_cfg: ModelConfig, preset: ExperimentPreset,
               sched: ScheduleConfig, optim_cfg: OptimConfig,
               src_batches, tgt_batch: Batch, e,
               kernel: L.KernelConfig | None = None) -> L.LossBundle:
    """Compute all losses on the given batches and apply one SGD update."""
    comps, _ = compute_step_losses(store, model_cfg, preset, src_batches,
                                   tgt_batch, kernel)
    beta = beta_schedule(e, sched.iter_total, sched.beta_max, sched.delta)
    lam = lambda_schedule(e / sched.iter_total if sched.iter_total else 1.0, sched.theta)
    total = L.combine(comps["distill"], comps["consistency"], comps["mmd"],
                      comps["restriction"], comps["classification"],
                      sched.alpha, beta, lam)
    if not np.isfinite(total.data).all():
        raise NumericError("the total loss is not finite")
    store.zero_grads()
    backward(total)
    sgd_step(store, e, sched.iter_total, optim_cfg)
    return L.LossBundle(
        distill=float(comps["distill"].data), consistency=float(comps["consistency"].data),
        mmd=float(comps["mmd"].data), restriction=float(comps["restriction"].data),
        classification=float(comps["classification"].data),
        alpha=sched.alpha, beta=beta, lam=lam, total=float(total.data))


def _augment_batch(batch: Batch, acfg: AugmentConfig, seed, step) -> Batch:
    if not acfg.any_enabled:
        return batch
    out = np.empty_like(batch.images)
    for i in range(len(batch.images)):
        rng = rng_for(seed, "augment", batch.domain_id, step, i)
        out[i] = augment_sample(batch.images[i], rng, acfg)
    return Batch(out, batch.labels, batch.domain_id)


def format_log_row(e, bundle: L.LossBundle, lr):
    values = (e, bundle.distill, bundle.consistency, bundle.mmd, bundle.restriction,
              bundle.classification, bundle.alpha, bundle.beta, bundle.lam,
              bundle.total, lr)
    return [str(e)] + [f"{v:.9g}" for v in values[1:]]


def train(source_datasets, target_dataset, model_cfg: ModelConfig,
          preset: ExperimentPreset, sched: ScheduleConfig, optim_cfg: OptimConfig,
          augment_cfg: AugmentConfig, batch_size, seed,
          out_dir=None, checkpoint_every=0, resume_from=None,
          print_every=0, print_fn=print):
    """Run the full loop; returns (parameter store, training-log rows).

    With `out_dir` set, writes training_log.csv (exactly iter_total data
    rows), periodic checkpoints when `checkpoint_every` > 0, and
    checkpoint_final.bin.  `resume_from` restarts from a saved checkpoint;
    the resumed run's log and final checkpoint are bit-identical to an
    uninterrupted run's.
    """
    for ds in source_datasets:
        if len(ds) < batch_size:
            raise ConfigError(f"source domain '{ds.domain_id}' has {len(ds)} samples "
                              f"< batch size {batch_size}")
    if len(target_dataset) < batch_size:
        raise ConfigError(f"target domain has {len(target_dataset)} samples "
                          f"< batch size {batch_size}")
    target_dataset = target_dataset.without_labels()

    if resume_from is not None:
        store = ckpt.load_checkpoint(resume_from)
        ckpt.check_shapes(store, param_shapes(model_cfg))
        if store.iter_total != sched.iter_total:
            raise ConfigError(
                f"checkpoint was trained toward {store.iter_total} iterations, "
                f"config says {sched.iter_total}")
    else:
        store = init_model_params(model_cfg, seed)
        store.iter_total = sched.iter_total

    out_path = Path(out_dir) if out_dir is not None else None
    rows = []
    log_file = None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        log_path = out_path / "training_log.csv"
        existing = []
        if resume_from is not None and log_path.exists():
            with open(log_path, newline="") as fh:
                reader = csv.reader(fh)
                header = next(reader, None)
                if header == list(LOG_COLUMNS):
                    existing = [row for row in reader if int(row[0]) < store.step]
        log_file = open(log_path, "w", newline="")
        writer = csv.writer(log_file)
        writer.writerow(LOG_COLUMNS)
        writer.writerows(existing)
        rows.extend(existing)
        log_file.flush()
    else:
        writer = None

    try:
        for e in range(store.step, sched.iter_total):
            src_batches, tgt_batch = sample_batches(
                source_datasets, target_dataset, batch_size, seed, e)
            src_batches = [_augment_batch(b, augment_cfg, seed, e) for b in src_batches]
            tgt_batch = _augment_batch(tgt_batch, augment_cfg, seed, e)
            bundle = train_step(store, model_cfg, preset, sched, optim_cfg,
                                src_batches, tgt_batch, e)
            lr = annealed_lr(optim_cfg, e / sched.iter_total if sched.iter_total else 0.0)
            row = format_log_row(e, bundle, lr)
            rows.append(row)
            if writer is not None:
                writer.writerow(row)
                if e % 50 == 0:
                    log_file.flush()
            if print_every and (e % print_every == 0 or e == sched.iter_total - 1):
                print_fn(f"iter {e:6d}  total {bundle.total:.4f}  "
                         f"cls {bundle.classification:.4f}  dtl {bundle.distill:.4f}  "
                         f"con {bundle.consistency:.4f}  mmd {bundle.mmd:.4f}  "
                         f"rest {bundle.restriction:.4f}  lr {lr:.2e}")
            if (out_path is not None and checkpoint_every
                    and (e + 1) % checkpoint_every == 0
                    and (e + 1) < sched.iter_total):
                ckpt.save_checkpoint(store, out_path / f"checkpoint_{e + 1:06d}.bin")
    finally:
        if log_file is not None:
            log_file.close()

    if out_path is not None:
        ckpt.save_checkpoint(store, out_path / "checkpoint_final.bin")
    return store, rows
