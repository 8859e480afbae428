"""Adam optimizer state/step and the warmup-cosine learning rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import UsageError
from .tensor import Tensor


@dataclass
class AdamState:
    """Bias-corrected Adam with per-parameter moment buffers.

    Defaults beta1=0.9, beta2=0.999, epsilon=1e-8 (standard choices).
    ``step_count`` increments by exactly 1 per adam_step call.
    """

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: list = field(default_factory=list)
    second_moment: list = field(default_factory=list)

    def __post_init__(self):
        if not (0.0 < self.lr):
            raise UsageError(f"lr must be positive, got {self.lr}")
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise UsageError(f"betas must lie in (0,1), got {self.beta1}, {self.beta2}")
        if not (0.0 < self.epsilon < 1e-2):
            raise UsageError(f"epsilon must lie in (0, 1e-2), got {self.epsilon}")


def adam_step(params: Sequence[Tensor], state: AdamState) -> None:
    """Apply one in-place Adam update to ``params`` from their ``.grad``."""
    params = list(params)
    if not state.first_moment:
        state.first_moment = [np.zeros_like(p.data) for p in params]
        state.second_moment = [np.zeros_like(p.data) for p in params]
    if len(state.first_moment) != len(params):
        raise UsageError("AdamState was initialized for a different parameter list")

    for i, p in enumerate(params):
        if p.grad is None:
            raise UsageError(f"parameter {i} has no gradient; run backward first")
        if state.first_moment[i].shape != p.data.shape:
            raise UsageError(f"moment buffer {i} does not match parameter shape")

    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for p, m, v in zip(params, state.first_moment, state.second_moment):
        g = p.grad
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.data -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)


@dataclass(frozen=True)
class CosineSchedule:
    """Linear warmup 0 -> base_lr, then cosine decay down to min_lr."""

    base_lr: float
    min_lr: float
    warmup_epochs: int
    total_epochs: int

    def __post_init__(self):
        if self.base_lr <= 0 or self.min_lr <= 0:
            raise UsageError("learning rates must be positive")
        if self.warmup_epochs < 1 or self.total_epochs < 1:
            raise UsageError("epoch counts must be positive")
        if self.warmup_epochs >= self.total_epochs:
            raise UsageError("warmup must end before the schedule does")


def cosine_lr(schedule: CosineSchedule, epoch: int) -> float:
    """Learning rate at ``epoch``; epoch must lie in [0, total_epochs)."""
    if not (0 <= epoch < schedule.total_epochs):
        raise UsageError(
            f"epoch {epoch} outside schedule range [0, {schedule.total_epochs})")
    if epoch < schedule.warmup_epochs:
        return schedule.base_lr * epoch / schedule.warmup_epochs
    span = schedule.total_epochs - 1 - schedule.warmup_epochs
    if span == 0:
        return schedule.min_lr
    t = (epoch - schedule.warmup_epochs) / span
    cos = 0.5 * (1.0 + np.cos(np.pi * t))
    return schedule.min_lr + (schedule.base_lr - schedule.min_lr) * cos
