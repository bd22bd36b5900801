"""Whole-model configuration and parameter initialization."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..diffcore.params import ParamStore
from ..errors import ContractViolation
from . import cnn, heads, transformer
from .cnn import CnnConfig
from .transformer import TransformerConfig


@dataclass(frozen=True)
class ModelConfig:
    m_sources: int = 2
    image_size: int = 32
    d_a: int = 64
    cnn: CnnConfig = field(default_factory=CnnConfig)
    vit: TransformerConfig = field(default_factory=TransformerConfig)

    def __post_init__(self):
        if self.m_sources < 1:
            raise ContractViolation("ModelConfig: m_sources must be >= 1")
        if self.d_a < 1:
            raise ContractViolation("ModelConfig: d_a must be >= 1")
        # fail fast on incompatible geometry
        self.cnn.spatial_after(self.image_size)
        self.vit.tokens(self.image_size)


def param_shapes(cfg: ModelConfig):
    """Every parameter name and shape the model owns, in one table."""
    shapes = {}
    shapes.update(cnn.param_shapes(cfg.cnn))
    shapes.update(transformer.param_shapes(cfg.vit, cfg.image_size))
    shapes.update(heads.param_shapes(cfg.m_sources, cfg.cnn.d_f, cfg.vit.d_model, cfg.d_a))
    return shapes


def init_model_params(cfg: ModelConfig, seed, dtype=np.float32) -> ParamStore:
    """A freshly initialized store holding both paths and every head.

    All heads are always created — including the distillation head when a
    preset will not train it — so checkpoints from different presets share
    one shape table.
    """
    store = ParamStore(dtype)
    cnn.init_params(store, cfg.cnn, seed)
    transformer.init_params(store, cfg.vit, cfg.image_size, seed)
    heads.init_params(store, cfg.m_sources, cfg.cnn.d_f, cfg.vit.d_model, cfg.d_a, seed)
    expected = param_shapes(cfg)
    actual = {name: tuple(store[name].data.shape) for name in store.names()}
    if actual != {k: tuple(v) for k, v in expected.items()}:
        raise ContractViolation("init_model_params: shape table mismatch")
    return store


def n_parameters(cfg: ModelConfig):
    return sum(int(np.prod(s)) for s in param_shapes(cfg).values())
