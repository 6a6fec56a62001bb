"""Per-step learning-rate schedule: linear warmup, then cosine decay to zero.

The rate rises linearly from 0 to the base rate over the warmup steps,
then follows a half cosine down to exactly 0 at the final step.  Steps
past the end stay at 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError


@dataclass(frozen=True)
class WarmupCosineSchedule:
    base_lr: float
    warmup_steps: int
    total_steps: int

    def __post_init__(self):
        if self.base_lr <= 0:
            raise ConfigError(f"base_lr must be positive, got {self.base_lr}")
        if self.warmup_steps < 0:
            raise ConfigError(f"warmup_steps must be >= 0, got {self.warmup_steps}")
        if self.total_steps <= self.warmup_steps:
            raise ConfigError(
                f"total_steps ({self.total_steps}) must exceed warmup_steps "
                f"({self.warmup_steps})"
            )

    @classmethod
    def from_epochs(
        cls,
        base_lr: float,
        warmup_epochs: int,
        total_epochs: int,
        steps_per_epoch: int,
    ) -> "WarmupCosineSchedule":
        if steps_per_epoch < 1:
            raise ConfigError(f"steps_per_epoch must be >= 1, got {steps_per_epoch}")
        return cls(
            base_lr=base_lr,
            warmup_steps=warmup_epochs * steps_per_epoch,
            total_steps=total_epochs * steps_per_epoch,
        )

    def lr_at(self, step: int) -> float:
        if step < 0:
            raise ConfigError(f"step must be >= 0, got {step}")
        if step >= self.total_steps:
            return 0.0
        if step < self.warmup_steps:
            return self.base_lr * step / self.warmup_steps
        span = self.total_steps - self.warmup_steps
        progress = (step - self.warmup_steps) / span
        return self.base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def apply_lr(optimizer, lr: float) -> None:
    for group in optimizer.param_groups:
        group["lr"] = lr
