"""Flat run configuration: every tunable knob of the pipeline with its default."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from typing import Optional

__all__ = ["RunConfig", "NOISE_PRESETS"]

# (noise sigma, noise clip) on the unit-sphere scale produced by the generator.
# "paper" reproduces the published protocol verbatim; it is enormous relative
# to unit-normalized clouds and is kept as a preset, not the default.
NOISE_PRESETS = {"default": (0.01, 0.05), "paper": (0.5, 1.0)}

_GRAD_MODES = ("analytic", "finite-difference")


@dataclass
class RunConfig:
    """Hyperparameters for matching, scoring, solving and training.

    The defaults here are the single source of truth; the CLI, the estimator
    facade, and the trainer all read them from this class.
    """

    # neighborhoods / matching
    num_neighbors: int = 8            # k-NN size shared by descriptor, consensus scores, losses
    consensus_baseline: float = 1.0   # neighborhood score at which a feature distance is kept as-is
    use_refinement: bool = True       # rescale the matching map by neighborhood agreement

    # descriptor / scorer architecture
    descriptor_widths: tuple = (32, 32)
    include_center: bool = True       # append the center point to each descriptor edge input
    scorer_channels: int = 16
    fusion_kernel: int = 3            # window over the ordered neighbor axis; 1 disables fusion
    inlier_count: Optional[int] = None  # pairs kept by the loss-side selection; None -> N // 2
    iterations: int = 3

    # loss weights
    huber_width: float = 0.05
    neighborhood_loss_weight: float = 1.0
    consistency_loss_weight: float = 0.1

    # training
    epochs: int = 50
    batch_size: int = 8
    learning_rate: float = 1e-3
    lr_milestones: tuple = (25,)
    lr_decay: float = 0.7
    seed: int = 0
    grad_mode: str = "analytic"

    # data generation preset used by the CLI when a gen spec names one
    noise_preset: str = "default"

    def __post_init__(self):
        self.descriptor_widths = tuple(int(w) for w in self.descriptor_widths)
        self.lr_milestones = tuple(int(m) for m in self.lr_milestones)
        self.validate()

    def validate(self) -> None:
        if self.num_neighbors < 1:
            raise ValueError("num_neighbors must be positive")
        if not self.descriptor_widths or any(w < 1 for w in self.descriptor_widths):
            raise ValueError("descriptor_widths must be positive")
        if self.scorer_channels < 1:
            raise ValueError("scorer_channels must be positive")
        if self.fusion_kernel not in (1, 3):
            raise ValueError("fusion_kernel must be 1 or 3")
        if self.inlier_count is not None and self.inlier_count < 1:
            raise ValueError("inlier_count must be positive when given")
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if self.huber_width <= 0:
            raise ValueError("huber_width must be positive")
        if self.neighborhood_loss_weight < 0 or self.consistency_loss_weight < 0:
            raise ValueError("loss weights must be non-negative")
        if self.epochs < 1:
            raise ValueError("epochs must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        # learning_rate 0 is allowed so a no-op training step stays testable
        if not (0.0 <= self.learning_rate < 1.0):
            raise ValueError("learning_rate must lie in [0, 1)")
        if not (0.0 < self.lr_decay <= 1.0):
            raise ValueError("lr_decay must lie in (0, 1]")
        if any(m < 1 for m in self.lr_milestones):
            raise ValueError("lr_milestones must be positive epoch numbers")
        if self.grad_mode not in _GRAD_MODES:
            raise ValueError(f"grad_mode must be one of {_GRAD_MODES}")
        if self.noise_preset not in NOISE_PRESETS:
            raise ValueError(f"noise_preset must be one of {tuple(NOISE_PRESETS)}")

    def replace(self, **updates) -> "RunConfig":
        data = asdict(self)
        data.update(updates)
        return RunConfig(**data)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["descriptor_widths"] = list(self.descriptor_widths)
        data["lr_milestones"] = list(self.lr_milestones)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ValueError("config file must hold a JSON object")
        return cls.from_dict(data)

    def to_file(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True, allow_nan=False)
            fh.write("\n")
