"""Training-time augmentation for single-channel images in [0, 1].

Composition order: horizontal flip (p = 0.5) -> rotation within +/-15 degrees
-> random resized crop (area scale 0.8-1.0) -> brightness/contrast jitter
(+/-0.2).  Hue jitter would be a no-op on grayscale and is omitted.  With all
flags disabled the input is returned bit-exactly.  Geometry uses bilinear
resampling with edge replication.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import map_coordinates

_grid_cache: dict = {}


def _base_grid(h, w):
    key = (h, w)
    if key not in _grid_cache:
        _grid_cache[key] = np.mgrid[0:h, 0:w].astype(np.float64)
    return _grid_cache[key]


@dataclass(frozen=True)
class AugmentConfig:
    flip: bool = True
    rotate: bool = True
    crop: bool = True
    jitter: bool = True

    @property
    def any_enabled(self):
        return self.flip or self.rotate or self.crop or self.jitter

    @classmethod
    def none(cls):
        return cls(flip=False, rotate=False, crop=False, jitter=False)


def hflip(img):
    return img[:, ::-1]


def rotate(img, angle_deg):
    """Rotate about the image center; bilinear, edges replicated."""
    h, w = img.shape
    yy, xx = _base_grid(h, w)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    theta = np.deg2rad(angle_deg)
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    ys = cos_t * (yy - cy) - sin_t * (xx - cx) + cy
    xs = sin_t * (yy - cy) + cos_t * (xx - cx) + cx
    return map_coordinates(img, [ys, xs], order=1, mode="nearest")


def crop_resize(img, top, left, side):
    """Crop a side x side square at (top, left) and resize back bilinearly."""
    h, w = img.shape
    yy, xx = _base_grid(h, w)
    ys = top + (yy + 0.5) * side / h - 0.5
    xs = left + (xx + 0.5) * side / w - 0.5
    return map_coordinates(img, [ys, xs], order=1, mode="nearest")


def jitter(img, brightness, contrast):
    mean = img.mean()
    return (img + brightness - mean) * (1.0 + contrast) + mean


def augment_sample(img, rng, cfg: AugmentConfig):
    """Apply the enabled transforms; identity (same array) when none are."""
    if not cfg.any_enabled:
        return img
    out = np.asarray(img, dtype=np.float64)
    if cfg.flip:
        if rng.random() < 0.5:
            out = hflip(out)
    if cfg.rotate:
        out = rotate(out, rng.uniform(-15.0, 15.0))
    if cfg.crop:
        h, w = out.shape
        scale = rng.uniform(0.8, 1.0)
        side = max(1, int(round(h * np.sqrt(scale))))
        top = int(rng.integers(0, h - side + 1))
        left = int(rng.integers(0, w - side + 1))
        out = crop_resize(out, top, left, side)
    if cfg.jitter:
        out = jitter(out, rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2))
    return np.clip(out, 0.0, 1.0).astype(np.float32)
