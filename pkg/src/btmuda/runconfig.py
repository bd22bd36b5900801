"""Run configuration: one UTF-8 JSON document describing a full experiment.

Every key is optional and falls back to the defaults below; unknown keys are
rejected with their full dotted path so typos cannot silently change a run.

::

    {
      "preset": "exp10",
      "seed": 0,
      "deterministic": true,
      "model": {
        "m_sources": 2, "image_size": 32, "d_a": 64,
        "cnn": {"widths": [16, 32, 64, 64], "kernel": 3, "d_f": 64},
        "transformer": {"patch_size": 8, "d_model": 64, "n_heads": 4,
                        "n_layers": 2, "ffn_hidden": null}
      },
      "schedule": {"alpha": 1.0, "beta_max": 0.5, "delta": 0.65,
                   "theta": 10.0, "iter_total": 2000},
      "optimizer": {"lr": 0.001, "momentum": 0.9, "weight_decay": 0.0005,
                    "anneal_a": 10.0, "anneal_b": 0.75},
      "train": {"batch_size": 16, "checkpoint_every": 0,
                "augment": {"flip": true, "rotate": true,
                            "crop": true, "jitter": true}},
      "data": {"synthetic": {"m_sources": 2, "samples_per_domain": 1000,
                             "eval_samples": 500, "image_size": 32,
                             "s_inter": 0.7, "s_intra": 0.5,
                             "balance": 0.5, "seed": 0}}
    }

``data`` may instead point at a directory of pre-rendered domains::

    {"data": {"directory": "runs/synth"}}

``effective_dict`` resolves every default (including ``ffn_hidden``) into a
plain dict; feeding that dict back through ``config_from_dict`` reproduces the
exact same ``RunConfig``, which is how every command records what it ran.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .data.augment import AugmentConfig
from .data.synth import SynthConfig
from .diffcore.optim import OptimConfig
from .errors import ConfigError, DataError
from .models.cnn import CnnConfig
from .models.network import ModelConfig
from .models.transformer import TransformerConfig
from .training.presets import get_preset
from .training.schedules import ScheduleConfig


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved settings for one experiment run."""

    preset: str = "exp10"
    seed: int = 0
    deterministic: bool = True
    model: ModelConfig = field(default_factory=ModelConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    optimizer: OptimConfig = field(default_factory=OptimConfig)
    batch_size: int = 16
    checkpoint_every: int = 0
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    synth: SynthConfig | None = field(default_factory=SynthConfig)
    data_dir: str | None = None

    def __post_init__(self):
        get_preset(self.preset)  # raises ConfigError on unknown names
        if self.batch_size < 1:
            raise ConfigError(f"train.batch_size must be >= 1, got {self.batch_size}")
        if self.checkpoint_every < 0:
            raise ConfigError(
                f"train.checkpoint_every must be >= 0, got {self.checkpoint_every}")
        if (self.synth is None) == (self.data_dir is None):
            raise ConfigError(
                "data must name exactly one source: 'synthetic' or 'directory'")
        if self.synth is not None:
            if self.synth.m_sources != self.model.m_sources:
                raise ConfigError(
                    "model.m_sources and data.synthetic.m_sources disagree: "
                    f"{self.model.m_sources} vs {self.synth.m_sources}")
            if self.synth.image_size != self.model.image_size:
                raise ConfigError(
                    "model.image_size and data.synthetic.image_size disagree: "
                    f"{self.model.image_size} vs {self.synth.image_size}")


# ---------------------------------------------------------------------------
# typed field readers — every accessor knows its dotted path for error text


def _check_keys(obj, allowed, path):
    if not isinstance(obj, dict):
        raise ConfigError(f"{path} must be a JSON object, got {type(obj).__name__}")
    unknown = sorted(set(obj) - set(allowed))
    if unknown:
        listed = ", ".join(f"{path}.{k}" if path else k for k in unknown)
        raise ConfigError(f"unknown config key(s): {listed}")


def _get_int(obj, key, path, default):
    v = obj.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{path}.{key} must be an integer, got {v!r}")
    return v


def _get_float(obj, key, path, default):
    v = obj.get(key, default)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}.{key} must be a number, got {v!r}")
    return float(v)


def _get_bool(obj, key, path, default):
    v = obj.get(key, default)
    if not isinstance(v, bool):
        raise ConfigError(f"{path}.{key} must be true or false, got {v!r}")
    return v


def _get_str(obj, key, path, default):
    v = obj.get(key, default)
    if not isinstance(v, str):
        raise ConfigError(f"{path}.{key} must be a string, got {v!r}")
    return v


def _get_int_list(obj, key, path, default):
    v = obj.get(key, default)
    if isinstance(v, tuple):
        v = list(v)
    if not isinstance(v, list) or not v or any(
            isinstance(x, bool) or not isinstance(x, int) for x in v):
        raise ConfigError(f"{path}.{key} must be a non-empty list of integers, got {v!r}")
    return tuple(v)


# ---------------------------------------------------------------------------
# section builders


def _build_cnn(obj, path):
    _check_keys(obj, ("widths", "kernel", "d_f"), path)
    d = CnnConfig()
    return CnnConfig(
        widths=_get_int_list(obj, "widths", path, d.widths),
        kernel=_get_int(obj, "kernel", path, d.kernel),
        d_f=_get_int(obj, "d_f", path, d.d_f),
    )


def _build_transformer(obj, path):
    _check_keys(obj, ("patch_size", "d_model", "n_heads", "n_layers", "ffn_hidden"), path)
    d = TransformerConfig()
    d_model = _get_int(obj, "d_model", path, d.d_model)
    ffn = obj.get("ffn_hidden", None)
    ffn = 4 * d_model if ffn is None else _get_int(obj, "ffn_hidden", path, None)
    return TransformerConfig(
        patch_size=_get_int(obj, "patch_size", path, d.patch_size),
        d_model=d_model,
        n_heads=_get_int(obj, "n_heads", path, d.n_heads),
        n_layers=_get_int(obj, "n_layers", path, d.n_layers),
        ffn_hidden=ffn,
    )


def _build_model(obj, path):
    _check_keys(obj, ("m_sources", "image_size", "d_a", "cnn", "transformer"), path)
    d = ModelConfig()
    return ModelConfig(
        m_sources=_get_int(obj, "m_sources", path, d.m_sources),
        image_size=_get_int(obj, "image_size", path, d.image_size),
        d_a=_get_int(obj, "d_a", path, d.d_a),
        cnn=_build_cnn(obj.get("cnn", {}), f"{path}.cnn"),
        vit=_build_transformer(obj.get("transformer", {}), f"{path}.transformer"),
    )


def _build_schedule(obj, path):
    _check_keys(obj, ("alpha", "beta_max", "delta", "theta", "iter_total"), path)
    d = ScheduleConfig()
    return ScheduleConfig(
        alpha=_get_float(obj, "alpha", path, d.alpha),
        beta_max=_get_float(obj, "beta_max", path, d.beta_max),
        delta=_get_float(obj, "delta", path, d.delta),
        theta=_get_float(obj, "theta", path, d.theta),
        iter_total=_get_int(obj, "iter_total", path, d.iter_total),
    )


def _build_optimizer(obj, path):
    _check_keys(obj, ("lr", "momentum", "weight_decay", "anneal_a", "anneal_b"), path)
    d = OptimConfig()
    return OptimConfig(
        lr=_get_float(obj, "lr", path, d.lr),
        momentum=_get_float(obj, "momentum", path, d.momentum),
        weight_decay=_get_float(obj, "weight_decay", path, d.weight_decay),
        anneal_a=_get_float(obj, "anneal_a", path, d.anneal_a),
        anneal_b=_get_float(obj, "anneal_b", path, d.anneal_b),
    )


def _build_augment(obj, path):
    _check_keys(obj, ("flip", "rotate", "crop", "jitter"), path)
    d = AugmentConfig()
    return AugmentConfig(
        flip=_get_bool(obj, "flip", path, d.flip),
        rotate=_get_bool(obj, "rotate", path, d.rotate),
        crop=_get_bool(obj, "crop", path, d.crop),
        jitter=_get_bool(obj, "jitter", path, d.jitter),
    )


def _build_synth(obj, path):
    _check_keys(obj, ("m_sources", "samples_per_domain", "eval_samples", "image_size",
                      "s_inter", "s_intra", "balance", "seed"), path)
    d = SynthConfig()
    try:
        return SynthConfig(
            m_sources=_get_int(obj, "m_sources", path, d.m_sources),
            samples_per_domain=_get_int(obj, "samples_per_domain", path,
                                        d.samples_per_domain),
            eval_samples=_get_int(obj, "eval_samples", path, d.eval_samples),
            image_size=_get_int(obj, "image_size", path, d.image_size),
            s_inter=_get_float(obj, "s_inter", path, d.s_inter),
            s_intra=_get_float(obj, "s_intra", path, d.s_intra),
            balance=_get_float(obj, "balance", path, d.balance),
            seed=_get_int(obj, "seed", path, d.seed),
        )
    except ConfigError as exc:
        # re-anchor SynthConfig's own messages at this document's path
        raise ConfigError(str(exc).replace("SynthConfig.", f"{path}.")) from None


def _build_data(obj, path):
    """Returns (synth_config | None, directory | None)."""
    _check_keys(obj, ("synthetic", "directory"), path)
    if ("synthetic" in obj) == ("directory" in obj):
        raise ConfigError(
            f"{path} must contain exactly one of 'synthetic' or 'directory'")
    if "directory" in obj:
        return None, _get_str(obj, "directory", path, None)
    return _build_synth(obj["synthetic"], f"{path}.synthetic"), None


def config_from_dict(doc) -> RunConfig:
    """Validate a parsed JSON document and resolve every default."""
    _check_keys(doc, ("preset", "seed", "deterministic", "model", "schedule",
                      "optimizer", "train", "data"), "")
    train = doc.get("train", {})
    _check_keys(train, ("batch_size", "checkpoint_every", "augment"), "train")
    synth, data_dir = _build_data(doc.get("data", {"synthetic": {}}), "data")
    return RunConfig(
        preset=_get_str(doc, "preset", "config", RunConfig.preset),
        seed=_get_int(doc, "seed", "config", RunConfig.seed),
        deterministic=_get_bool(doc, "deterministic", "config", RunConfig.deterministic),
        model=_build_model(doc.get("model", {}), "model"),
        schedule=_build_schedule(doc.get("schedule", {}), "schedule"),
        optimizer=_build_optimizer(doc.get("optimizer", {}), "optimizer"),
        batch_size=_get_int(train, "batch_size", "train", RunConfig.batch_size),
        checkpoint_every=_get_int(train, "checkpoint_every", "train",
                                  RunConfig.checkpoint_every),
        augment=_build_augment(train.get("augment", {}), "train.augment"),
        synth=synth,
        data_dir=data_dir,
    )


def config_from_file(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read config file {path}: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    return config_from_dict(doc)


# ---------------------------------------------------------------------------
# effective (defaults-resolved) form


def synth_dict(cfg: SynthConfig):
    return {
        "m_sources": cfg.m_sources,
        "samples_per_domain": cfg.samples_per_domain,
        "eval_samples": cfg.eval_samples,
        "image_size": cfg.image_size,
        "s_inter": cfg.s_inter,
        "s_intra": cfg.s_intra,
        "balance": cfg.balance,
        "seed": cfg.seed,
    }


def effective_dict(rc: RunConfig):
    """The fully resolved document; parsing it back yields an equal RunConfig."""
    if rc.synth is not None:
        data = {"synthetic": synth_dict(rc.synth)}
    else:
        data = {"directory": rc.data_dir}
    return {
        "preset": rc.preset,
        "seed": rc.seed,
        "deterministic": rc.deterministic,
        "model": {
            "m_sources": rc.model.m_sources,
            "image_size": rc.model.image_size,
            "d_a": rc.model.d_a,
            "cnn": {
                "widths": list(rc.model.cnn.widths),
                "kernel": rc.model.cnn.kernel,
                "d_f": rc.model.cnn.d_f,
            },
            "transformer": {
                "patch_size": rc.model.vit.patch_size,
                "d_model": rc.model.vit.d_model,
                "n_heads": rc.model.vit.n_heads,
                "n_layers": rc.model.vit.n_layers,
                "ffn_hidden": rc.model.vit.hidden,
            },
        },
        "schedule": {
            "alpha": rc.schedule.alpha,
            "beta_max": rc.schedule.beta_max,
            "delta": rc.schedule.delta,
            "theta": rc.schedule.theta,
            "iter_total": rc.schedule.iter_total,
        },
        "optimizer": {
            "lr": rc.optimizer.lr,
            "momentum": rc.optimizer.momentum,
            "weight_decay": rc.optimizer.weight_decay,
            "anneal_a": rc.optimizer.anneal_a,
            "anneal_b": rc.optimizer.anneal_b,
        },
        "train": {
            "batch_size": rc.batch_size,
            "checkpoint_every": rc.checkpoint_every,
            "augment": {
                "flip": rc.augment.flip,
                "rotate": rc.augment.rotate,
                "crop": rc.augment.crop,
                "jitter": rc.augment.jitter,
            },
        },
        "data": data,
    }


def write_effective_config(rc: RunConfig, path):
    text = json.dumps(effective_dict(rc), indent=2, sort_keys=True) + "\n"
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise DataError(f"cannot write config file {path}: {exc}") from None
