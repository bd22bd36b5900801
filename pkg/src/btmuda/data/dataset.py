"""Datasets, deterministic epoch-shuffled batching, and PNG/CSV persistence."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from ..diffcore.params import rng_for
from ..errors import DataError

IMAGES_SUBDIR = "images"
LABELS_FILE = "labels.csv"


@dataclass
class Dataset:
    """One domain's samples.  `labels` is None when they are unknown."""
    images: np.ndarray            # (n, H, W) float32 in [0, 1]
    labels: np.ndarray | None     # (n,) ints in {0, 1}, or None
    domain_id: str
    role: str                     # "source" | "target"

    def __post_init__(self):
        if self.images.ndim != 3:
            raise DataError(f"Dataset images must be (n, H, W), got {self.images.shape}")
        if self.labels is not None and len(self.labels) != len(self.images):
            raise DataError(
                f"Dataset '{self.domain_id}': {len(self.labels)} labels for "
                f"{len(self.images)} images")

    def __len__(self):
        return len(self.images)

    def without_labels(self):
        return Dataset(self.images, None, self.domain_id, self.role)


@dataclass
class Batch:
    """A slice of one domain; target batches never carry labels."""
    images: np.ndarray            # (b, H, W) float32
    labels: np.ndarray | None
    domain_id: str


def batch_indices(seed, domain_id, step, batch_size, n):
    """Sample indices for the batch at `step` under epoch-shuffle semantics.

    Conceptually the domain is an endless stream of per-epoch permutations
    (epoch k's order comes from the substream (seed, domain, k)); the batch at
    step s is positions [s*b, (s+1)*b) of that stream.  Every sample is seen
    exactly once per epoch, and the result depends only on the arguments —
    no sampler state, so training can resume from any step.
    """
    if n < 1:
        raise DataError(f"domain '{domain_id}' is empty")
    start = step * batch_size
    out = np.empty(batch_size, dtype=np.int64)
    filled = 0
    while filled < batch_size:
        epoch, offset = divmod(start + filled, n)
        perm = rng_for(seed, "batches", domain_id, epoch).permutation(n)
        take = min(batch_size - filled, n - offset)
        out[filled:filled + take] = perm[offset:offset + take]
        filled += take
    return out


def sample_batches(sources, target: Dataset, batch_size, seed, step):
    """One batch per source domain plus one (label-free) target batch."""
    batches = []
    for ds in sources:
        idx = batch_indices(seed, ds.domain_id, step, batch_size, len(ds))
        if ds.labels is None:
            raise DataError(f"source domain '{ds.domain_id}' has no labels")
        batches.append(Batch(ds.images[idx], ds.labels[idx], ds.domain_id))
    idx = batch_indices(seed, target.domain_id, step, batch_size, len(target))
    batches_t = Batch(target.images[idx], None, target.domain_id)
    return batches, batches_t


# -- persistence -----------------------------------------------------------


def write_domain_dir(root, dataset: Dataset, with_labels=True):
    """Write root/<domain-id>/images/*.png (8-bit grayscale) and labels.csv."""
    base = Path(root) / dataset.domain_id
    img_dir = base / IMAGES_SUBDIR
    img_dir.mkdir(parents=True, exist_ok=True)
    names = []
    for i, img in enumerate(dataset.images):
        name = f"img_{i:05d}.png"
        arr = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
        Image.fromarray(arr, mode="L").save(img_dir / name)
        names.append(name)
    if with_labels:
        if dataset.labels is None:
            raise DataError(f"domain '{dataset.domain_id}': asked to write absent labels")
        with open(base / LABELS_FILE, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["filename", "label"])
            for name, label in zip(names, dataset.labels):
                writer.writerow([name, int(label)])
    return base


def load_domain_dir(path, image_size=None, role=None) -> Dataset:
    """Load one domain directory (images/*.png plus optional labels.csv)."""
    base = Path(path)
    img_dir = base / IMAGES_SUBDIR
    if not img_dir.is_dir():
        raise DataError(f"no '{IMAGES_SUBDIR}/' directory under {base}")
    files = sorted(img_dir.glob("*.png"))
    if not files:
        raise DataError(f"no PNG images under {img_dir}")

    images = []
    for f in files:
        try:
            with Image.open(f) as im:
                im = im.convert("L")
                if image_size is not None and im.size != (image_size, image_size):
                    im = im.resize((image_size, image_size), Image.BILINEAR)
                images.append(np.asarray(im, dtype=np.float32) / 255.0)
        except (UnidentifiedImageError, OSError) as exc:
            raise DataError(f"corrupt or unreadable PNG {f}: {exc}") from exc
    images = np.stack(images)

    labels = None
    labels_path = base / LABELS_FILE
    if labels_path.exists():
        by_name = {}
        with open(labels_path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or \
                    {"filename", "label"} - set(reader.fieldnames):
                raise DataError(f"{labels_path}: need columns filename,label")
            for row in reader:
                try:
                    value = int(row["label"])
                except (TypeError, ValueError):
                    raise DataError(
                        f"{labels_path}: non-integer label {row['label']!r} "
                        f"for {row['filename']!r}") from None
                if value not in (0, 1):
                    raise DataError(
                        f"{labels_path}: label {value} outside {{0,1}} "
                        f"for {row['filename']!r}")
                by_name[row["filename"]] = value
        missing = [f.name for f in files if f.name not in by_name]
        if missing:
            raise DataError(f"{labels_path}: no label for {missing[:3]} "
                            f"({len(missing)} missing)")
        labels = np.array([by_name[f.name] for f in files], dtype=np.int64)

    domain_id = base.name
    inferred_role = role if role is not None else ("source" if labels is not None else "target")
    return Dataset(images=images, labels=labels, domain_id=domain_id, role=inferred_role)
