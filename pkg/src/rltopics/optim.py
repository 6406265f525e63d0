"""AdamW with decoupled weight decay, plus global-norm gradient clipping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


@dataclass
class AdamWState:
    """Optimizer state for one parameter list.

    ``decay`` flags which parameters receive weight decay; layer-norm affine
    terms and the trainable priors are registered with ``decay=False``.
    """

    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    decay: list[bool] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: list[Tensor], decay: list[bool] | None = None, **kwargs) -> "AdamWState":
        state = cls(**kwargs)
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
        state.decay = list(decay) if decay is not None else [True] * len(params)
        if len(state.decay) != len(params):
            raise ValueError("decay flags must align with params")
        return state


def clip_global_norm(grads: list[np.ndarray], max_norm: float) -> tuple[list[np.ndarray], float]:
    """Scale all gradients by max_norm/norm when the global L2 norm exceeds it.

    Returns the (possibly rescaled) gradients and the observed pre-clip norm.
    """
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    total = 0.0
    for g in grads:
        total += float(np.sum(g * g))
    norm = float(np.sqrt(total))
    if norm > max_norm:
        scale = max_norm / norm
        grads = [g * scale for g in grads]
    return grads, norm


def adamw_step(params: list[Tensor], grads: list[np.ndarray], state: AdamWState) -> None:
    """One bias-corrected Adam update with decoupled weight decay.

    Decay is applied directly to the parameter (``p -= lr * wd * p``), never
    added to the gradient. Parameters are updated in place.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and state must align")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.step
    bc2 = 1.0 - b2**state.step
    for i, (p, g) in enumerate(zip(params, grads)):
        if g.shape != p.data.shape:
            raise ValueError(f"grad shape {g.shape} does not match param shape {p.data.shape}")
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * (g * g)
        m_hat = state.m[i] / bc1
        v_hat = state.v[i] / bc2
        update = state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        if state.weight_decay != 0.0 and state.decay[i]:
            update = update + state.lr * state.weight_decay * p.data
        p.data -= update
