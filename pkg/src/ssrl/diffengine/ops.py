"""Dispatch layer so one formula runs on numpy arrays or tape Vars.

Arithmetic dispatches through operator overloading on ``Var``; the named
functions here cover everything else (trig, stacking, linear solve). Code
written against this module is differentiable whenever any input is a Var.
"""
from __future__ import annotations

import numpy as np

from . import tape as _t
from .tape import Var


def _is_var(*xs) -> bool:
    return any(isinstance(x, Var) for x in xs)


def sin(x):
    return x.sin() if isinstance(x, Var) else np.sin(x)


def cos(x):
    return x.cos() if isinstance(x, Var) else np.cos(x)


def tanh(x):
    return x.tanh() if isinstance(x, Var) else np.tanh(x)


def exp(x):
    return x.exp() if isinstance(x, Var) else np.exp(x)


def log(x):
    return x.log() if isinstance(x, Var) else np.log(x)


def sqrt(x):
    return x.sqrt() if isinstance(x, Var) else np.sqrt(x)


def softplus(x):
    return x.softplus() if isinstance(x, Var) else np.logaddexp(0.0, x)


def clip(x, lo=None, hi=None):
    return x.clip(lo, hi) if isinstance(x, Var) else np.clip(x, lo, hi)


def matmul(a, b):
    if isinstance(a, Var):
        return a @ b
    if isinstance(b, Var):
        return b.tape.leaf(a, "const") @ b
    return a @ b


def concat(xs, axis=-1):
    if _is_var(*xs):
        return _t.concat(xs, axis=axis)
    return np.concatenate([np.asarray(x, dtype=np.float64) for x in xs], axis=axis)


def stack(xs, axis=-1):
    if _is_var(*xs):
        return _t.stack(xs, axis=axis)
    shape = np.broadcast_shapes(*[np.shape(x) for x in xs])
    return np.stack([np.broadcast_to(np.asarray(x, dtype=np.float64), shape)
                     for x in xs], axis=axis)


def solve(A, b):
    if _is_var(A, b):
        return _t.solve(A, b)
    return np.linalg.solve(A, np.asarray(b)[..., None])[..., 0]


def mT(x):
    """Swap the last two axes."""
    return x.mT() if isinstance(x, Var) else np.swapaxes(x, -1, -2)


def matvec(A, x):
    """Batched matrix-vector product: (..., m, n) @ (..., n) -> (..., m)."""
    if _is_var(A, x):
        return matmul(A, x[..., None])[..., 0]
    return (A @ np.asarray(x)[..., None])[..., 0]


def sum_(x, axis=None, keepdims=False):
    return x.sum(axis=axis, keepdims=keepdims)


def zeros_like_entry(x):
    """A zero with the same batch shape as one matrix/vector entry expr."""
    if isinstance(x, Var):
        return x * 0.0
    return np.zeros_like(np.asarray(x, dtype=np.float64))


def value(x):
    return _t.value_of(x)
