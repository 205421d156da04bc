"""Closed-form learning-rate schedules: linear warmup then cosine decay.

Pretraining warms up linearly from 0 to the base rate over the warmup span
and decays along a half-cosine to exactly 0 at the final step. Fine-tuning
warms up to the peak rate and decays to the final rate. Both are pure
functions of the step index; the warmup span is given in epochs, with an
optional step-count override.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigurationError


@dataclass(frozen=True)
class ScheduleSpec:
    peak_lr: float
    final_lr: float
    warmup_epochs: float
    total_epochs: int
    steps_per_epoch: int
    warmup_steps: int | None = None  # overrides warmup_epochs when set

    def validate(self) -> None:
        if self.steps_per_epoch < 1 or self.total_epochs < 1:
            raise ConfigurationError("schedule needs >= 1 step and >= 1 epoch")
        if self.peak_lr <= 0:
            raise ConfigurationError("peak_lr must be positive")
        if self.final_lr < 0 or self.final_lr > self.peak_lr:
            raise ConfigurationError("final_lr must lie in [0, peak_lr]")
        if self.warmup_span() >= self.total_steps():
            raise ConfigurationError("warmup must end before the schedule does")

    def total_steps(self) -> int:
        return self.total_epochs * self.steps_per_epoch

    def warmup_span(self) -> float:
        if self.warmup_steps is not None:
            return float(self.warmup_steps)
        return self.warmup_epochs * self.steps_per_epoch


def pretrain_schedule(base_lr: float, warmup_epochs: float, total_epochs: int,
                      steps_per_epoch: int, warmup_steps: int | None = None) -> ScheduleSpec:
    spec = ScheduleSpec(
        peak_lr=base_lr,
        final_lr=0.0,
        warmup_epochs=warmup_epochs,
        total_epochs=total_epochs,
        steps_per_epoch=steps_per_epoch,
        warmup_steps=warmup_steps,
    )
    spec.validate()
    return spec


def finetune_schedule(peak_lr: float, final_lr: float, warmup_epochs: float,
                      total_epochs: int, steps_per_epoch: int) -> ScheduleSpec:
    spec = ScheduleSpec(
        peak_lr=peak_lr,
        final_lr=final_lr,
        warmup_epochs=warmup_epochs,
        total_epochs=total_epochs,
        steps_per_epoch=steps_per_epoch,
    )
    spec.validate()
    return spec


def lr_at(step: int, schedule: ScheduleSpec) -> float:
    """Learning rate applied at 0-based ``step``.

    The schedule is indexed by completed progress e = step + 1, so the
    warmup boundary yields exactly the peak rate and the final step yields
    exactly the final rate. Steps beyond the schedule end return the
    terminal value.
    """
    if step < 0:
        raise ConfigurationError("step must be >= 0")
    total = schedule.total_steps()
    warmup = schedule.warmup_span()
    e = step + 1
    if e >= total:
        return schedule.final_lr
    if warmup > 0 and e <= warmup:
        return schedule.peak_lr * (e / warmup)
    t = (e - warmup) / (total - warmup)
    cos_term = 0.5 * (1.0 + math.cos(math.pi * t))
    return schedule.final_lr + (schedule.peak_lr - schedule.final_lr) * cos_term
