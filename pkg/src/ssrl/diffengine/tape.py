"""Reverse-mode automatic differentiation over a tape of numpy operations.

A ``Tape`` records every primitive operation in execution order (a Wengert
list), so the list itself is a valid topological order and the backward pass
is a single reverse sweep. Values are float64 numpy arrays; scalars are
0-d arrays. Tapes are single-use and must stay on one thread.
"""
from __future__ import annotations

import numpy as np

__all__ = ["Tape", "Var", "concat", "stack", "solve", "value_of"]


def _asarray(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (reverses numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tape:
    """Execution-ordered record of operations for one backward pass."""

    def __init__(self, check_finite: bool = True):
        self.nodes: list[Var] = []
        self.check_finite = check_finite

    def leaf(self, value, name: str = "leaf") -> "Var":
        return Var(self, _asarray(value), (), None, name)

    def leaves(self, arrays: dict) -> dict:
        return {k: self.leaf(v, name=k) for k, v in arrays.items()}

    def _register(self, var: "Var") -> None:
        if self.check_finite and not np.all(np.isfinite(var.value)):
            raise FloatingPointError(
                f"non-finite value produced by op '{var.name}' (node {len(self.nodes)})"
            )
        var._idx = len(self.nodes)
        self.nodes.append(var)

    def gradients(self, loss: "Var", wrt: list["Var"]) -> list[np.ndarray]:
        """Backward sweep from ``loss``; returns one gradient per ``wrt`` var.

        Visits each node exactly once, in reverse execution order.
        """
        if loss.value.ndim != 0:
            raise ValueError("loss must be a scalar")
        grads: list = [None] * (loss._idx + 1)
        grads[loss._idx] = np.ones(())
        for node in reversed(self.nodes[: loss._idx + 1]):
            g = grads[node._idx]
            if g is None or node._vjp is None:
                continue
            for parent, pg in zip(node.parents, node._vjp(g)):
                if pg is None:
                    continue
                if grads[parent._idx] is None:
                    grads[parent._idx] = pg
                else:
                    grads[parent._idx] = grads[parent._idx] + pg
        out = []
        for v in wrt:
            g = grads[v._idx] if v._idx <= loss._idx else None
            out.append(np.zeros_like(v.value) if g is None else np.asarray(g))
        return out


class Var:
    """Handle to one tape node: a float64 array plus its backward rule."""

    __slots__ = ("tape", "value", "parents", "_vjp", "name", "_idx")

    # keep numpy from absorbing Vars into object arrays; reflected
    # operators on Var handle ndarray-Var arithmetic instead
    __array_ufunc__ = None

    def __init__(self, tape, value, parents, vjp, name):
        self.tape = tape
        self.value = value
        self.parents = parents
        self._vjp = vjp
        self.name = name
        tape._register(self)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var({self.name}, shape={self.value.shape})"

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Var):
            a, b = self.value, other.value
            return Var(self.tape, a + b, (self, other),
                       lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
                       "add")
        c = _asarray(other)
        return Var(self.tape, self.value + c, (self,),
                   lambda g: (_unbroadcast(g, self.value.shape),), "add_const")

    __radd__ = __add__

    def __neg__(self):
        return Var(self.tape, -self.value, (self,), lambda g: (-g,), "neg")

    def __sub__(self, other):
        if isinstance(other, Var):
            a, b = self.value, other.value
            return Var(self.tape, a - b, (self, other),
                       lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
                       "sub")
        return self + (-_asarray(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Var):
            a, b = self.value, other.value
            return Var(self.tape, a * b, (self, other),
                       lambda g: (_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)),
                       "mul")
        c = _asarray(other)
        return Var(self.tape, self.value * c, (self,),
                   lambda g: (_unbroadcast(g * c, self.value.shape),), "mul_const")

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Var):
            a, b = self.value, other.value
            return Var(self.tape, a / b, (self, other),
                       lambda g: (_unbroadcast(g / b, a.shape),
                                  _unbroadcast(-g * a / (b * b), b.shape)),
                       "div")
        return self * (1.0 / _asarray(other))

    def __rtruediv__(self, other):
        c = _asarray(other)
        v = self.value
        return Var(self.tape, c / v, (self,),
                   lambda g: (_unbroadcast(-g * c / (v * v), v.shape),), "rdiv")

    def __pow__(self, p):
        p = float(p)
        v = self.value
        return Var(self.tape, v ** p, (self,),
                   lambda g: (g * p * v ** (p - 1.0),), "pow")

    def __matmul__(self, other):
        if not isinstance(other, Var):
            other = self.tape.leaf(other, "const")
        a, b = self.value, other.value
        if a.ndim < 2 or b.ndim < 2:
            raise ValueError("tape matmul needs matrices; use ops.matvec for vectors")
        out = a @ b

        def vjp(g):
            ga = g @ np.swapaxes(b, -1, -2)
            gb = np.swapaxes(a, -1, -2) @ g
            return (_unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape))

        return Var(self.tape, out, (self, other), vjp, "matmul")

    # -- elementwise functions ----------------------------------------------

    def tanh(self):
        out = np.tanh(self.value)
        return Var(self.tape, out, (self,), lambda g: (g * (1.0 - out * out),), "tanh")

    def exp(self):
        out = np.exp(self.value)
        return Var(self.tape, out, (self,), lambda g: (g * out,), "exp")

    def log(self):
        v = self.value
        return Var(self.tape, np.log(v), (self,), lambda g: (g / v,), "log")

    def sqrt(self):
        out = np.sqrt(self.value)
        return Var(self.tape, out, (self,), lambda g: (g * 0.5 / out,), "sqrt")

    def sin(self):
        v = self.value
        return Var(self.tape, np.sin(v), (self,), lambda g: (g * np.cos(v),), "sin")

    def cos(self):
        v = self.value
        return Var(self.tape, np.cos(v), (self,), lambda g: (-g * np.sin(v),), "cos")

    def softplus(self):
        v = self.value
        out = np.logaddexp(0.0, v)
        sig = 1.0 / (1.0 + np.exp(-v))
        return Var(self.tape, out, (self,), lambda g: (g * sig,), "softplus")

    def clip(self, lo=None, hi=None):
        """Hard clip with zero gradient outside [lo, hi]."""
        v = self.value
        out = np.clip(v, lo, hi)
        inside = np.ones_like(v)
        if lo is not None:
            inside = inside * (v >= lo)
        if hi is not None:
            inside = inside * (v <= hi)
        return Var(self.tape, out, (self,), lambda g: (g * inside,), "clip")

    # -- reductions / shaping -------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        v = self.value
        out = v.sum(axis=axis, keepdims=keepdims)

        def vjp(g):
            g = np.asarray(g)
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, v.shape).copy(),)

        return Var(self.tape, out, (self,), vjp, "sum")

    def mean(self, axis=None, keepdims=False):
        n = self.value.size if axis is None else np.prod(
            [self.value.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(n))

    def reshape(self, *shape):
        v = self.value
        return Var(self.tape, v.reshape(*shape), (self,),
                   lambda g: (g.reshape(v.shape),), "reshape")

    def mT(self):
        """Swap the last two axes (matrix transpose of a batched matrix)."""
        out = np.swapaxes(self.value, -1, -2)
        return Var(self.tape, out, (self,),
                   lambda g: (np.swapaxes(g, -1, -2),), "mT")

    def __getitem__(self, key):
        v = self.value
        out = v[key]

        def vjp(g):
            gp = np.zeros_like(v)
            gp[key] += g
            return (gp,)

        return Var(self.tape, out, (self,), vjp, "getitem")


# -- multi-input ops ----------------------------------------------------------

def concat(vars_: list, axis: int = -1):
    """Concatenate Vars (and/or constant arrays) along ``axis``."""
    tape = next(v.tape for v in vars_ if isinstance(v, Var))
    vs = [v if isinstance(v, Var) else tape.leaf(v, "const") for v in vars_]
    vals = [v.value for v in vs]
    out = np.concatenate(vals, axis=axis)
    sizes = [v.shape[axis] for v in vals]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return Var(tape, out, tuple(vs), vjp, "concat")


def stack(vars_: list, axis: int = -1):
    """Stack Vars (and/or constants) along a new ``axis``."""
    tape = next(v.tape for v in vars_ if isinstance(v, Var))
    vs = [v if isinstance(v, Var) else tape.leaf(v, "const") for v in vars_]
    vals = [np.broadcast_to(v.value, np.broadcast_shapes(*[u.value.shape for u in vs]))
            for v in vs]
    out = np.stack(vals, axis=axis)

    def vjp(g):
        pieces = np.moveaxis(g, axis, 0)
        return tuple(_unbroadcast(pieces[i], vs[i].value.shape) for i in range(len(vs)))

    return Var(tape, out, tuple(vs), vjp, "stack")


def solve(A, b):
    """Differentiable batched linear solve: x with A @ x = b.

    ``A`` has shape (..., n, n), ``b`` shape (..., n). Gradient rules:
    gb = A^-T g, gA = -gb x^T.
    """
    tape = A.tape if isinstance(A, Var) else b.tape
    if not isinstance(A, Var):
        A = tape.leaf(A, "const")
    if not isinstance(b, Var):
        b = tape.leaf(b, "const")
    Av, bv = A.value, b.value
    x = np.linalg.solve(Av, bv[..., None])[..., 0]

    def vjp(g):
        gb = np.linalg.solve(np.swapaxes(Av, -1, -2), g[..., None])[..., 0]
        gA = -gb[..., :, None] * x[..., None, :]
        return (_unbroadcast(gA, Av.shape), _unbroadcast(gb, bv.shape))

    return Var(tape, x, (A, b), vjp, "solve")


def value_of(x) -> np.ndarray:
    """Underlying numpy array of a Var, or the array itself."""
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)
