"""Epoch-indexed dataset handle over the recombination engine.

The handle adds no image processing of its own: get(epoch, index) returns
exactly the pixels the engine's batch generator writes for the same
(config, epoch, index). Length equals the number of foregrounds and never
changes; set_epoch switches which recombinations are sampled, not the size.

The handle duck-types as a map-style dataset (__len__/__getitem__ against
the current epoch), so training-framework loaders consume it directly.
Concurrent get calls are safe; epoch changes must be synchronized by the
caller (their effect on in-flight reads is otherwise undefined).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from fgbg import RecombinationConfig, load_manifest, plan_sample, prune_backgrounds, render


class DatasetHandle:
    def __init__(self, manifest_dir: str | Path, config: RecombinationConfig):
        self.manifest = prune_backgrounds(load_manifest(manifest_dir), config.t_prune)
        self.config = config
        self.epoch = 0

    def __len__(self) -> int:
        return len(self.manifest.foregrounds)

    def set_epoch(self, epoch: int) -> None:
        if not 0 <= epoch < self.config.total_epochs:
            raise IndexError(f"epoch {epoch} outside [0, {self.config.total_epochs})")
        self.epoch = epoch

    def get(self, epoch: int, index: int) -> tuple[np.ndarray, int]:
        """Rendered HxWx3 uint8 image and its class id."""
        if not 0 <= index < len(self):
            raise IndexError(f"index {index} outside [0, {len(self)})")
        plan = plan_sample(self.manifest, self.config, epoch, index)
        image = render(plan, self.manifest, self.config)
        label = self.manifest.foreground(plan.fg_id).class_id
        return image, label

    def __getitem__(self, index: int) -> tuple[np.ndarray, int]:
        return self.get(self.epoch, index)
