"""Adam with bias correction, the single optimizer used by the harness.

Defaults follow the original recipe (beta1=0.9, beta2=0.999, eps=1e-8);
the learning rate defaults to the 3e-5 used throughout the experiments.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import ShapeError

DEFAULT_LR = 3e-5


class NonFiniteGradError(ValueError):
    """A gradient handed to the optimizer contains NaN or Inf."""


@dataclass
class AdamState:
    lr: float = DEFAULT_LR
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    scratch: list[np.ndarray] = field(default_factory=list)
    names: list[str] | None = None


def init_adam(params: list[np.ndarray], lr: float = DEFAULT_LR,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
              names: list[str] | None = None) -> AdamState:
    return AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps, step=0,
                     m=[np.zeros_like(p) for p in params],
                     v=[np.zeros_like(p) for p in params],
                     scratch=[np.empty_like(p) for p in params],
                     names=list(names) if names else None)


def adam_step(state: AdamState, params: list[np.ndarray],
              grads: list[np.ndarray]) -> list[np.ndarray]:
    """One bias-corrected update; parameters are modified in place.

    All arithmetic runs through preallocated buffers: the update is on the
    hot path of every experiment, so no per-step temporaries are allocated.
    """
    if len(params) != len(state.m) or len(grads) != len(state.m):
        raise ShapeError("parameter/gradient/state lengths differ")
    state.step += 1
    c1 = 1.0 - state.beta1 ** state.step
    c2 = 1.0 - state.beta2 ** state.step
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise ShapeError(f"param/grad shape mismatch at index {i}: {p.shape} vs {g.shape}")
        if not np.all(np.isfinite(g)):
            name = state.names[i] if state.names else f"param[{i}]"
            raise NonFiniteGradError(f"non-finite gradient in {name}")
        m, v, t = state.m[i], state.v[i], state.scratch[i]
        m *= state.beta1
        np.multiply(g, 1.0 - state.beta1, out=t)
        m += t
        v *= state.beta2
        np.multiply(g, g, out=t)
        t *= 1.0 - state.beta2
        v += t
        # t = lr * (m/c1) / (sqrt(v/c2) + eps)
        np.divide(v, c2, out=t)
        np.sqrt(t, out=t)
        t += state.eps
        np.divide(m, t, out=t)
        t *= state.lr / c1
        p -= t
    return params
