"""Experiment presets: which paths and losses are active.

The ten named presets walk through the ablation ladder: single-path variants
(exp1-exp5), the two-path source-only baseline (exp6), then adding the MMD
alignment (exp7), the restriction loss (exp8), the three-branch pairing with
its distillation teacher (exp9), and finally the cross-path consistency loss
(exp10, the full model).
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import ConfigError


@dataclass(frozen=True)
class ExperimentPreset:
    name: str
    use_cnn: bool
    use_transformer: bool
    use_mmd: bool
    use_rest: bool
    use_three_branch: bool
    use_con: bool

    def __post_init__(self):
        if not (self.use_cnn or self.use_transformer):
            raise ConfigError(f"preset '{self.name}': at least one path must be active")
        if self.use_three_branch and not self.use_transformer:
            raise ConfigError(f"preset '{self.name}': three-branch needs the transformer path")
        if self.use_con and not (self.use_cnn and self.use_transformer):
            raise ConfigError(f"preset '{self.name}': consistency needs both paths")

    @property
    def use_distill(self):
        # the distillation teacher is the source-target branch, so the loss
        # exists exactly when the three-branch pairing does
        return self.use_three_branch

    def active_paths(self):
        return tuple(k for k, on in ((1, self.use_cnn), (2, self.use_transformer)) if on)


PRESETS = {
    "exp1": ExperimentPreset("exp1", True, False, True, False, False, False),
    "exp2": ExperimentPreset("exp2", True, False, True, True, False, False),
    "exp3": ExperimentPreset("exp3", False, True, True, False, False, False),
    "exp4": ExperimentPreset("exp4", False, True, True, True, False, False),
    "exp5": ExperimentPreset("exp5", False, True, True, True, True, False),
    "exp6": ExperimentPreset("exp6", True, True, False, False, False, False),
    "exp7": ExperimentPreset("exp7", True, True, True, False, False, False),
    "exp8": ExperimentPreset("exp8", True, True, True, True, False, False),
    "exp9": ExperimentPreset("exp9", True, True, True, True, True, False),
    "exp10": ExperimentPreset("exp10", True, True, True, True, True, True),
}


def get_preset(name) -> ExperimentPreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(
            f"unknown preset '{name}'; choose one of {', '.join(sorted(PRESETS))}") from None
