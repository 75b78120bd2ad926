"""Multilayer perceptrons and the diagonal-Gaussian likelihood.

Parameters live in plain dicts of float64 arrays so they serialize through
``checkpoint`` and update functionally through ``optim``. A leading ensemble
axis is supported everywhere: weights shaped (P, fan_in, fan_out) process
inputs shaped (P, B, fan_in) in one batched matmul.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .tape import Var

VAR_FLOOR = 1e-6
VAR_CEIL = 1e4


@dataclass
class MlpParams:
    """Layer sizes plus weight/bias arrays; tanh hidden, linear output."""

    sizes: list[int]
    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)

    def n_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)


def mlp_init(rng: np.random.Generator, sizes: list[int], ensemble: int | None = None,
             scale: float = 1.0) -> MlpParams:
    """Gaussian fan-in init. ``ensemble`` adds a leading member axis."""
    p = MlpParams(sizes=list(sizes))
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        std = scale / np.sqrt(fan_in)
        if ensemble is None:
            w = rng.normal(0.0, std, size=(fan_in, fan_out))
            b = np.zeros(fan_out)
        else:
            w = rng.normal(0.0, std, size=(ensemble, fan_in, fan_out))
            b = np.zeros((ensemble, 1, fan_out))
        p.weights.append(w)
        p.biases.append(b)
    return p


def mlp_forward(weights: list, biases: list, x):
    """Forward pass; works on numpy arrays or tape Vars.

    When the caller is training, ``weights``/``biases`` are tape leaves and
    the whole pass is recorded.
    """
    h = x
    last = len(weights) - 1
    for i, (w, b) in enumerate(zip(weights, biases)):
        h = ops.matmul(h, w) + b
        if i != last:
            h = ops.tanh(h)
    return h


def params_as_dict(prefix: str, p: MlpParams) -> dict:
    out = {}
    for i, (w, b) in enumerate(zip(p.weights, p.biases)):
        out[f"{prefix}.w{i}"] = w
        out[f"{prefix}.b{i}"] = b
    return out


def params_from_dict(prefix: str, sizes: list[int], d: dict) -> MlpParams:
    n = len(sizes) - 1
    return MlpParams(sizes=list(sizes),
                     weights=[d[f"{prefix}.w{i}"] for i in range(n)],
                     biases=[d[f"{prefix}.b{i}"] for i in range(n)])


def positive_variance(raw):
    """Map a raw net output to a variance in [VAR_FLOOR, VAR_CEIL].

    Softplus keeps it positive with useful gradients; the floor avoids
    likelihood blow-up, the ceiling avoids loss collapse via infinite noise.
    """
    return ops.clip(ops.softplus(raw) + VAR_FLOOR, None, VAR_CEIL)


def gaussian_nll(mean, diag_variance, target):
    """(mean-target)^T diag(v)^-1 (mean-target) + sum(log v), over the last axis.

    Vector inputs give a scalar; batched inputs give one value per row.
    Variances must be positive.
    """
    if not isinstance(diag_variance, Var):
        if np.any(np.asarray(diag_variance) <= 0.0):
            raise ValueError("gaussian_nll requires positive variances")
    r = mean - target
    q = ops.sum_(r * r / diag_variance, axis=-1)
    return q + ops.sum_(ops.log(diag_variance), axis=-1)
