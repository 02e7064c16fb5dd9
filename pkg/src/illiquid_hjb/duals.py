"""Batched forward-mode dual numbers truncated at second order.

A :class:`Dual` carries the value of a function together with its gradient
and (optionally) Hessian with respect to ``k`` seed variables.  Every
arithmetic operation applies the exact chain rule, so derivatives are free
of finite-difference noise.

Shapes: ``val`` has a batch shape ``S``, ``grad`` has ``S + (k,)`` and
``hess`` has ``S + (k, k)``.  A dual without Hessian (``hess is None``)
propagates first derivatives only, which is cheaper when curvature is not
needed (residual Jacobians).

Examples
--------
>>> x, y = Dual.variables([2.0, 3.0])
>>> f = x * x * y
>>> float(f.val), f.grad.tolist(), f.hess.tolist()
(12.0, [12.0, 4.0], [[6.0, 4.0], [4.0, 0.0]])
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy import special

__all__ = [
    "Dual",
    "lift",
    "exp",
    "log",
    "sqrt",
    "erfcx",
    "value_of",
    "is_dual",
]


def _outer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., :, None] * b[..., None, :]


class Dual:
    """Second-order truncated Taylor jet in ``k`` variables.

    Parameters
    ----------
    val : array_like
        Function values, batch shape ``S``.
    grad : ndarray
        Gradient, shape ``S + (k,)``.
    hess : ndarray or None
        Hessian, shape ``S + (k, k)``; ``None`` for first-order duals.
    """

    __slots__ = ("val", "grad", "hess")
    __array_priority__ = 1000

    def __init__(self, val, grad, hess=None):
        self.val = np.asarray(val, dtype=float)
        self.grad = grad
        self.hess = hess

    # construction ---------------------------------------------------
    @classmethod
    def variables(cls, values: Sequence, order: int = 2) -> list["Dual"]:
        """Seed independent variables.

        Parameters
        ----------
        values : sequence of array_like
            One entry per variable; entries are broadcast to a common shape.
        order : {1, 2}
            Highest derivative order carried.
        """
        arrs = np.broadcast_arrays(*[np.asarray(v, dtype=float) for v in values])
        k = len(arrs)
        shape = arrs[0].shape
        out = []
        for i, a in enumerate(arrs):
            g = np.zeros(shape + (k,))
            g[..., i] = 1.0
            H = np.zeros(shape + (k, k)) if order >= 2 else None
            out.append(cls(a.copy(), g, H))
        return out

    @classmethod
    def constant(cls, value, like: "Dual") -> "Dual":
        """A dual with zero derivatives, shaped like ``like``."""
        v = np.broadcast_to(np.asarray(value, dtype=float), like.val.shape).copy()
        g = np.zeros(v.shape + (like.nvars,))
        H = None if like.hess is None else np.zeros(v.shape + (like.nvars, like.nvars))
        return cls(v, g, H)

    @property
    def nvars(self) -> int:
        return self.grad.shape[-1]

    @property
    def order(self) -> int:
        return 1 if self.hess is None else 2

    def __repr__(self) -> str:
        return f"Dual(val={self.val!r}, order={self.order}, nvars={self.nvars})"

    # helpers ----------------------------------------------------------
    def _bcast(self, other):
        """Broadcast a plain array against the batch shape."""
        return np.asarray(other, dtype=float)

    def chain(self, f0, f1, f2=None) -> "Dual":
        """Apply a univariate function given its value and two derivatives."""
        f1 = np.asarray(f1, dtype=float)
        g = f1[..., None] * self.grad
        H = None
        if self.hess is not None:
            f2 = np.asarray(f2, dtype=float)
            H = f1[..., None, None] * self.hess + f2[..., None, None] * _outer(self.grad, self.grad)
        return Dual(f0, g, H)

    # arithmetic -------------------------------------------------------
    def __neg__(self):
        return Dual(-self.val, -self.grad, None if self.hess is None else -self.hess)

    def __pos__(self):
        return self

    def __add__(self, other):
        if isinstance(other, Dual):
            H = None if (self.hess is None or other.hess is None) else self.hess + other.hess
            return Dual(self.val + other.val, self.grad + other.grad, H)
        o = self._bcast(other)
        g = np.broadcast_to(self.grad, np.broadcast_shapes(o.shape, self.val.shape) + (self.nvars,))
        H = self.hess
        if H is not None:
            H = np.broadcast_to(H, g.shape + (self.nvars,))
        return Dual(self.val + o, g, H)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Dual):
            a, b = self, other
            g = a.grad * b.val[..., None] + b.grad * a.val[..., None]
            H = None
            if a.hess is not None and b.hess is not None:
                H = (
                    a.hess * b.val[..., None, None]
                    + b.hess * a.val[..., None, None]
                    + _outer(a.grad, b.grad)
                    + _outer(b.grad, a.grad)
                )
            return Dual(a.val * b.val, g, H)
        o = self._bcast(other)
        H = None if self.hess is None else self.hess * o[..., None, None]
        return Dual(self.val * o, self.grad * o[..., None], H)

    __rmul__ = __mul__

    def reciprocal(self) -> "Dual":
        inv = 1.0 / self.val
        return self.chain(inv, -inv * inv, 2.0 * inv * inv * inv)

    def __truediv__(self, other):
        if isinstance(other, Dual):
            return self * other.reciprocal()
        return self * (1.0 / self._bcast(other))

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p):
        if isinstance(p, Dual):
            return exp(p * log(self))
        p = float(p)
        if p == 2.0:
            return self * self
        v = self.val
        return self.chain(v**p, p * v ** (p - 1.0), p * (p - 1.0) * v ** (p - 2.0))

    def __rpow__(self, base):
        return exp(self * np.log(base))

    # numpy-like access -------------------------------------------------
    def __getitem__(self, idx):
        H = None if self.hess is None else self.hess[idx]
        return Dual(self.val[idx], self.grad[idx], H)

    @property
    def shape(self):
        return self.val.shape


def is_dual(x) -> bool:
    return isinstance(x, Dual)


def value_of(x):
    """Plain value of a dual or pass-through for arrays and scalars."""
    return x.val if isinstance(x, Dual) else x


def lift(x, f: Callable, f1: Callable, f2: Callable):
    """Apply a univariate function with known derivatives to a dual or array."""
    if isinstance(x, Dual):
        v = x.val
        return x.chain(f(v), f1(v), f2(v) if x.hess is not None else None)
    return f(np.asarray(x, dtype=float))


def exp(x):
    if isinstance(x, Dual):
        e = np.exp(x.val)
        return x.chain(e, e, e)
    return np.exp(x)


def log(x):
    if isinstance(x, Dual):
        v = x.val
        return x.chain(np.log(v), 1.0 / v, -1.0 / (v * v))
    return np.log(x)


def sqrt(x):
    return x**0.5 if isinstance(x, Dual) else np.sqrt(x)


def erfcx(x):
    """Scaled complementary error function ``exp(x**2) * erfc(x)``."""
    if isinstance(x, Dual):
        v = x.val
        e = special.erfcx(v)
        d1 = 2.0 * v * e - 2.0 / np.sqrt(np.pi)
        d2 = 2.0 * e + 2.0 * v * d1
        return x.chain(e, d1, d2)
    return special.erfcx(x)
