"""Adam with bias correction and a step (halving) learning-rate schedule."""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .tensor import Tensor


class AdamState:
    """Per-parameter first/second moments plus the shared step counter."""

    def __init__(self, params: dict[str, Tensor], lr: float = 2.5e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.step = 0
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray],
              state: AdamState) -> None:
    """One in-place Adam update. Parameters without a gradient are skipped."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.data.shape:
            raise ShapeError(f"grad shape {g.shape} != param shape {p.data.shape} for {name!r}")
        m = state.m[name]
        v = state.v[name]
        m += (1.0 - b1) * (g - m)
        v += (1.0 - b2) * (g * g - v)
        update = (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        p.data -= (state.lr * update).astype(p.data.dtype, copy=False)


def step_lr(initial_lr: float, epoch: int, halve_at: int) -> float:
    """Learning rate for `epoch` (0-based): halved once `halve_at` is reached."""
    return initial_lr * (0.5 if epoch >= halve_at else 1.0)
