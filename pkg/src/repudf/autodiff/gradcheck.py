"""Central finite-difference check of tape gradients."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, Tensor


def tape_gradients(fn: Callable[[], Tensor], inputs: Sequence[Tensor]) -> list[np.ndarray]:
    for t in inputs:
        t.requires_grad = True
        t.grad = None
    with Tape() as tape:
        out = fn()
    tape.backward(out, accumulate=False)
    return [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]


def numeric_gradients(fn: Callable[[], Tensor], inputs: Sequence[Tensor], h: float = 1e-6,
                      entries: int | None = None, rng: np.random.Generator | None = None):
    """Central differences, optionally on a random subset of ``entries`` coordinates per input.

    Returns ``(grads, masks)`` where ``masks[i]`` marks the coordinates evaluated.
    """
    grads, masks = [], []
    for t in inputs:
        flat = t.data.reshape(-1)
        g = np.zeros(flat.size)
        if entries is None or entries >= flat.size:
            sel = np.arange(flat.size)
        else:
            sel = np.sort((rng or np.random.default_rng(0)).choice(flat.size, entries, replace=False))
        for i in sel:
            old = flat[i]
            flat[i] = old + h
            fp = float(fn().data)
            flat[i] = old - h
            fm = float(fn().data)
            flat[i] = old
            g[i] = (fp - fm) / (2 * h)
        mask = np.zeros(flat.size, dtype=bool)
        mask[sel] = True
        grads.append(g.reshape(t.shape))
        masks.append(mask.reshape(t.shape))
    return grads, masks


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """``max|a - n| / max(max|a|, max|n|, floor)``.

    The floor keeps gradients that vanish analytically (e.g. a bias that cancels
    inside a softmax) from turning rounding noise into a relative error of 1.
    """
    scale = max(np.max(np.abs(analytic), initial=0.0), np.max(np.abs(numeric), initial=0.0), floor)
    return float(np.max(np.abs(analytic - numeric), initial=0.0) / scale)


def grad_check(fn: Callable[[], Tensor], inputs: Sequence[Tensor], h: float = 1e-6,
               entries: int | None = None, seed: int = 0) -> float:
    """Worst (over inputs) relative error between tape and finite-difference gradients.

    ``fn`` must rebuild its scalar output from the current values of ``inputs``.
    The error of each input is measured relative to that input's largest gradient
    component, which stays meaningful when individual components are near zero.
    """
    analytic = tape_gradients(fn, inputs)
    numeric, masks = numeric_gradients(fn, inputs, h, entries, np.random.default_rng(seed))
    worst = 0.0
    for a, n, m in zip(analytic, numeric, masks):
        worst = max(worst, relative_error(a[m], n[m]))
    return worst
