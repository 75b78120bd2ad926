"""Shared test oracles. These stay independent of the code paths they check:
finite differences here never touch the tape's backward rules."""
from __future__ import annotations

import numpy as np


def fd_gradient(f, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient of scalar f at flat vector x."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += eps
        xm[i] -= eps
        g[i] = (f(xp) - f(xm)) / (2.0 * eps)
    return g


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    """Norm-wise relative error max|a-b| / max|b|.

    Componentwise division is meaningless at near-zero components where the
    finite-difference reference is pure roundoff, so normalize by the
    gradient's overall scale instead.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    return float(np.max(np.abs(a - b)) / max(1e-12, np.max(np.abs(b))))


def flatten_dict(params: dict):
    """Pack a dict of arrays into one flat vector (plus restore closure)."""
    keys = list(params.keys())
    shapes = [np.shape(params[k]) for k in keys]
    sizes = [int(np.prod(s)) if s else 1 for s in shapes]
    flat = np.concatenate([np.asarray(params[k]).ravel() for k in keys])

    def restore(vec):
        out = {}
        ofs = 0
        for k, s, n in zip(keys, shapes, sizes):
            out[k] = vec[ofs:ofs + n].reshape(s).copy()
            ofs += n
        return out

    return flat, restore
