"""Adam with bias correction and a cosine learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import Array, Tensor


@dataclass
class AdamState:
    """Per-parameter first/second moments plus hyperparameters.

    Moment arrays are shape-identical to their parameters; ``step`` counts
    completed updates and increases by exactly one per ``adam_step``.
    """

    m: list[Array]
    v: list[Array]
    step: int = 0
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params: list[Tensor], lr: float = 5e-4, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    return AdamState(
        m=[np.zeros(p.shape) for p in params],
        v=[np.zeros(p.shape) for p in params],
        lr=lr, beta1=beta1, beta2=beta2, eps=eps,
    )


def adam_step(params: list[Tensor], grads: list[Array], state: AdamState,
              lr: float | None = None) -> AdamState:
    """One standard Adam update, in place on ``params`` and ``state``.

    Deterministic given identical inputs. ``lr`` overrides the stored rate
    for this step (used by schedules).
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params/grads/state length mismatch")
    rate = state.lr if lr is None else lr
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"grad shape {g.shape} != param shape {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.data -= rate * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return state


def cosine_lr(step: int, total_steps: int, base_lr: float, floor_frac: float = 0.1) -> float:
    """Cosine decay from base_lr to floor_frac * base_lr over total_steps."""
    if total_steps <= 1:
        return base_lr
    lo = floor_frac * base_lr
    frac = min(max(step / (total_steps - 1), 0.0), 1.0)
    return lo + 0.5 * (base_lr - lo) * (1.0 + math.cos(math.pi * frac))
