"""Adaptive-moment (Adam) optimizer over dicts of parameter arrays.

Updates are functional: each step returns fresh arrays, so parameter
snapshots already handed to rollout workers never mutate underneath them.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class OptimizerState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def optimizer_init(params: dict, lr: float = 1e-3) -> OptimizerState:
    st = OptimizerState(lr=lr)
    st.m = {k: np.zeros_like(p) for k, p in params.items()}
    st.v = {k: np.zeros_like(p) for k, p in params.items()}
    return st


def optimizer_step(params: dict, grads: dict, state: OptimizerState):
    """One bias-corrected Adam update; returns (new params, new state)."""
    for k, p in params.items():
        if grads[k].shape != p.shape:
            raise ValueError(f"gradient shape mismatch for '{k}': "
                             f"{grads[k].shape} vs {p.shape}")
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new_params, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        m = b1 * state.m[k] + (1.0 - b1) * g
        v = b2 * state.v[k] + (1.0 - b2) * g * g
        new_params[k] = p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        new_m[k] = m
        new_v[k] = v
    st = OptimizerState(lr=state.lr, beta1=b1, beta2=b2, eps=state.eps, step=t,
                        m=new_m, v=new_v)
    return new_params, st
