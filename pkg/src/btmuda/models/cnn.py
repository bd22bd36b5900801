"""Convolutional feature extractor: the local-texture path of the model.

A small stack of stride-2 stages — 3x3 convolution, channel normalization,
a strided identity skip when the channel count is unchanged, ReLU — followed
by global average pooling and an affine projection to the feature width.
Normalization is per-position over channels (no batch statistics), so the
output for a sample never depends on its batchmates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..diffcore import tensor as T
from ..diffcore.params import ParamStore, fanin_normal, small_normal, rng_for
from ..diffcore.tensor import Tensor
from ..errors import ContractViolation


@dataclass(frozen=True)
class CnnConfig:
    widths: tuple = (16, 32, 64, 64)
    kernel: int = 3
    d_f: int = 64

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(self.widths))
        if len(self.widths) < 2:
            raise ContractViolation("CnnConfig: need at least 2 stages")
        if self.kernel % 2 != 1:
            raise ContractViolation("CnnConfig: kernel must be odd")

    def spatial_after(self, image_size):
        size = image_size
        for _ in self.widths:
            size = (size + 2 * (self.kernel // 2) - self.kernel) // 2 + 1
            if size < 1:
                raise ContractViolation(
                    f"CnnConfig: {len(self.widths)} stages collapse a "
                    f"{image_size}px image below 1px")
        return size


def param_shapes(cfg: CnnConfig):
    shapes = {}
    cin = 1
    for i, cout in enumerate(cfg.widths, start=1):
        shapes[f"cnn/stage{i}/conv_w"] = (cfg.kernel, cfg.kernel, cin, cout)
        shapes[f"cnn/stage{i}/norm_gain"] = (cout,)
        shapes[f"cnn/stage{i}/norm_bias"] = (cout,)
        cin = cout
    shapes["cnn/proj/w"] = (cfg.widths[-1], cfg.d_f)
    shapes["cnn/proj/b"] = (cfg.d_f,)
    return shapes


def init_params(store: ParamStore, cfg: CnnConfig, seed):
    for name, shape in param_shapes(cfg).items():
        rng = rng_for(seed, "init", name)
        if name.endswith("conv_w"):
            fan_in = shape[0] * shape[1] * shape[2]
            store.add(name, fanin_normal(rng, shape, fan_in))
        elif name.endswith("norm_gain"):
            store.add(name, np.ones(shape))
        elif name.endswith("/w"):
            store.add(name, fanin_normal(rng, shape, shape[0]))
        else:
            store.add(name, small_normal(rng, shape))


def cnn_forward(images, store: ParamStore, cfg: CnnConfig) -> Tensor:
    """Images (batch, H, W) -> features (batch, d_f)."""
    arr = images.data if isinstance(images, Tensor) else np.asarray(images)
    x = Tensor(arr[..., None].astype(store.dtype))
    if x.ndim != 4:
        raise ContractViolation(f"cnn_forward: expected (batch, H, W), got {arr.shape}")
    pad = cfg.kernel // 2
    cin = 1
    for i, cout in enumerate(cfg.widths, start=1):
        y = T.conv2d(x, store[f"cnn/stage{i}/conv_w"], stride=2, padding=pad)
        y = T.layernorm(y, store[f"cnn/stage{i}/norm_gain"], store[f"cnn/stage{i}/norm_bias"])
        if cin == cout:
            y = y + x[:, ::2, ::2, :]
        x = T.relu(y)
        cin = cout
    pooled = x.mean(axis=(1, 2))
    return T.matmul(pooled, store["cnn/proj/w"]) + store["cnn/proj/b"]
