"""Adam with linear warmup followed by cosine decay to zero."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import NonFiniteError
from .tensor import Tensor


def warmup_cosine_lr(step: int, base_lr: float, total_steps: int, warmup_frac: float = 0.05) -> float:
    """Learning rate for 1-indexed ``step``; ``step == 0`` gives 0."""
    warm = max(1, int(round(warmup_frac * total_steps))) if warmup_frac > 0 else 0
    if step <= 0:
        return 0.0
    if step <= warm:
        return base_lr * step / warm
    decay = max(1, total_steps - warm)
    t = min(1.0, (step - warm) / decay)
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * t))


@dataclass
class AdamState:
    lr: float = 1e-4
    total_steps: int = 1000
    warmup_frac: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def current_lr(self, step: int | None = None) -> float:
        return warmup_cosine_lr(self.step if step is None else step, self.lr,
                                self.total_steps, self.warmup_frac)


def adam_step(state: AdamState, params: dict[str, Tensor],
              grads: dict[str, np.ndarray] | None = None) -> float:
    """One in-place Adam update; returns the learning rate used.

    ``grads`` defaults to each parameter's ``.grad`` (missing grads count as zero).
    """
    if grads is None:
        grads = {k: p.grad for k, p in params.items()}
    bad = [k for k, g in grads.items() if g is not None and not np.all(np.isfinite(g))]
    if bad:
        raise NonFiniteError(f"non-finite gradient at step {state.step + 1} in: {', '.join(sorted(bad))}")
    state.step += 1
    lr = state.current_lr()
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return lr
