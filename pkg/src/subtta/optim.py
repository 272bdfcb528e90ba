"""Bias-corrected Adam over named parameter groups.

Deltas are returned to the caller rather than applied, so the encoder stays
the single owner of its parameters. Non-finite gradients skip the step.
"""

from __future__ import annotations

import numpy as np


class AdamState:
    def __init__(self, shapes: dict[str, tuple[int, ...]], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step_count = 0
        self.m1 = {k: np.zeros(s) for k, s in shapes.items()}
        self.m2 = {k: np.zeros(s) for k, s in shapes.items()}
        self.skipped_steps = 0


def adam_step(state: AdamState, grads: dict[str, np.ndarray]) -> dict[str, np.ndarray] | None:
    """One Adam step; returns parameter deltas, or None if the step was
    skipped because a gradient was non-finite."""
    if set(grads) != set(state.m1):
        raise KeyError(f"gradient groups {sorted(grads)} != state groups {sorted(state.m1)}")
    for g in grads.values():
        if not np.all(np.isfinite(g)):
            state.skipped_steps += 1
            return None
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    deltas = {}
    for k, g in grads.items():
        state.m1[k] = state.beta1 * state.m1[k] + (1.0 - state.beta1) * g
        state.m2[k] = state.beta2 * state.m2[k] + (1.0 - state.beta2) * g * g
        m_hat = state.m1[k] / bc1
        v_hat = state.m2[k] / bc2
        deltas[k] = -state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return deltas
