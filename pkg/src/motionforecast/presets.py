"""Dataset presets: frame rate, horizon, joint count, and epoch budget.

The three bundles used throughout evaluation:

- ``h36m``: 17 joints at 10 Hz, 0.5 s observed to 2.0 s predicted, 20 epochs.
- ``cmu``: 31 joints at 10 Hz, 0.5 s observed to 1.0 s predicted, 50 epochs.
- ``darko``: 30 joints at 16 Hz, roughly 0.94 s observed to 1.88 s predicted,
  125 epochs.

Every field can be overridden individually when building a model config.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .model import ModelConfig
from .skeleton import HorizonSpec


@dataclass(frozen=True)
class DatasetPreset:
    name: str
    fps: float
    num_joints: int
    input_len: int
    output_len: int
    max_epochs: int

    @property
    def horizon(self) -> HorizonSpec:
        return HorizonSpec(input_len=self.input_len, output_len=self.output_len)

    def model_config(self, num_joints: int | None = None, **overrides) -> ModelConfig:
        """A default model config for this preset; keyword overrides win."""
        base = dict(
            num_joints=self.num_joints if num_joints is None else num_joints,
            input_len=self.input_len,
            output_len=self.output_len,
        )
        base.update(overrides)
        return ModelConfig(**base)


PRESETS: dict[str, DatasetPreset] = {
    "h36m": DatasetPreset(
        name="h36m", fps=10.0, num_joints=17, input_len=5, output_len=20, max_epochs=20
    ),
    "cmu": DatasetPreset(
        name="cmu", fps=10.0, num_joints=31, input_len=5, output_len=10, max_epochs=50
    ),
    "darko": DatasetPreset(
        name="darko", fps=16.0, num_joints=30, input_len=15, output_len=30, max_epochs=125
    ),
}


def get_preset(name: str) -> DatasetPreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(
            f"unknown preset {name!r}; available: {sorted(PRESETS)}"
        ) from None


def replace(preset: DatasetPreset, **changes) -> DatasetPreset:
    """A copy of the preset with individual fields overridden."""
    return dataclasses.replace(preset, **changes)
