"""Adam optimizer over named parameter tensors."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .tape import Tensor


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(state: AdamState, params: Mapping[str, Tensor],
              grads: Mapping[str, np.ndarray], clip: float | None = None) -> None:
    """Bias-corrected Adam update.

    Parameter tensors get new ``data`` arrays (old arrays are never written),
    so earlier snapshots of ``.data`` stay valid.  ``clip`` optionally rescales
    the global gradient norm.
    """
    for name, p in params.items():
        if grads[name].shape != p.shape:
            raise ValueError(f"gradient shape {grads[name].shape} != parameter {name} {p.shape}")
    scale = 1.0
    if clip is not None:
        norm = np.sqrt(sum(float(np.sum(grads[n] ** 2)) for n in params))
        if norm > clip:
            scale = clip / norm
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = grads[name] * scale
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        else:
            v = state.v[name]
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.m[name], state.v[name] = m, v
        p.data = p.data - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
