"""Adam with bias correction and the triangular cyclical learning rate."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class NonFiniteGradientError(FloatingPointError):
    pass


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState, lr: float) -> None:
    """Update ``params`` in place (arrays keep their identity)."""
    if set(params) != set(grads):
        raise ValueError("params and grads have different keys")
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise ValueError(f"{name}: grad shape {g.shape} != param shape {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient in {name}")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = grads[name]
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


@dataclass(frozen=True)
class CyclicalLrSchedule:
    base_lr: float = 1e-4
    max_lr: float = 3e-3
    step_size: int = 80

    def __post_init__(self):
        if not 0 < self.base_lr <= self.max_lr:
            raise ValueError("need 0 < base_lr <= max_lr")
        if self.step_size < 1:
            raise ValueError("step_size must be a positive integer")


def cyclical_lr(t: int, sched: CyclicalLrSchedule) -> float:
    """Triangular policy: base at t=0, peak at t=step_size, period 2*step_size."""
    if t < 0:
        raise ValueError("iteration must be >= 0")
    cycle = math.floor(1 + t / (2 * sched.step_size))
    x = abs(t / sched.step_size - 2 * cycle + 1)
    return sched.base_lr + (sched.max_lr - sched.base_lr) * max(0.0, 1.0 - x)
