"""Adam with bias correction, linear-warmup learning rate, global-norm clipping."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autograd import Tensor


@dataclass(frozen=True)
class LrSchedule:
    base_lr: float = 3e-4
    warmup_steps: int = 16_000

    def __post_init__(self):
        if self.warmup_steps <= 0:
            raise ValueError("warmup_steps must be positive")

    def __call__(self, step: int) -> float:
        if step >= self.warmup_steps:
            return self.base_lr
        return self.base_lr * (max(step, 0) / self.warmup_steps)


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: dict[str, Tensor], **kw) -> "AdamState":
        st = cls(**kw)
        for name, p in params.items():
            st.first_moment[name] = np.zeros_like(p.data)
            st.second_moment[name] = np.zeros_like(p.data)
        return st


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray],
              state: AdamState, schedule: LrSchedule) -> dict[str, Tensor]:
    """One in-place Adam update at learning rate ``schedule(state.step + 1)``."""
    missing = [n for n in params if n not in grads]
    if missing:
        raise KeyError(f"adam_step: no gradient for parameter(s) {missing[:5]}")
    if set(state.first_moment) != set(params):
        raise ValueError("adam_step: optimizer state does not mirror the parameter set")
    t = state.step + 1
    lr = schedule(t)
    b1, b2, eps = state.beta1, state.beta2, state.epsilon
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"adam_step: gradient for {name} has shape {g.shape}, expected {p.shape}")
        m = state.first_moment[name]
        v = state.second_moment[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        upd = lr * (m / c1) / (np.sqrt(v / c2) + eps)
        p.data -= upd.astype(p.dtype, copy=False)
    state.step = t
    return params


def clip_grad_norm(grads: dict[str, np.ndarray], max_norm: float | None) -> float:
    """Scale ``grads`` in place so their global L2 norm is at most ``max_norm``.

    Returns the norm before clipping.
    """
    total = float(np.sqrt(sum(float(np.vdot(g, g)) for g in grads.values())))
    if max_norm and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads.values():
            g *= scale
    return total
