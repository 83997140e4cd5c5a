"""First-order forward-mode jets over numpy arrays.

A :class:`Jet` carries a value array and its gradient with respect to a
fixed, small set of independent variables (the gradient axis comes first).
It is used to push exact first derivatives in (u, r, theta, psi) through the
assembled metric functions.
"""

from __future__ import annotations

import numpy as np


def real_array(x) -> np.ndarray:
    """``x`` as a floating array, keeping extended precision when given."""
    x = np.asarray(x)
    return x if x.dtype.kind == "f" else x.astype(float)


def inv3(A: np.ndarray) -> np.ndarray:
    """Inverse of a stack of 3x3 matrices by the adjugate (any float dtype)."""
    a, b, c = A[..., 0, 0], A[..., 0, 1], A[..., 0, 2]
    d, e, f = A[..., 1, 0], A[..., 1, 1], A[..., 1, 2]
    g, h, i = A[..., 2, 0], A[..., 2, 1], A[..., 2, 2]
    adj = np.empty_like(A)
    adj[..., 0, 0], adj[..., 0, 1], adj[..., 0, 2] = e * i - f * h, c * h - b * i, b * f - c * e
    adj[..., 1, 0], adj[..., 1, 1], adj[..., 1, 2] = f * g - d * i, a * i - c * g, c * d - a * f
    adj[..., 2, 0], adj[..., 2, 1], adj[..., 2, 2] = d * h - e * g, b * g - a * h, a * e - b * d
    det = a * adj[..., 0, 0] + b * adj[..., 1, 0] + c * adj[..., 2, 0]
    if np.any(det == 0) or not np.all(np.isfinite(det)):
        raise np.linalg.LinAlgError("singular 3x3 matrix")
    return adj / det[..., None, None]


class Jet:
    __slots__ = ("v", "g")
    __array_priority__ = 1000

    def __init__(self, v, g):
        self.v = v
        self.g = g

    @classmethod
    def const(cls, v, n: int):
        v = real_array(v)
        return cls(v, np.zeros((n,) + v.shape))

    @classmethod
    def variable(cls, v, index: int, n: int):
        v = real_array(v)
        g = np.zeros((n,) + v.shape, dtype=v.dtype)
        g[index] = 1.0
        return cls(v, g)

    @property
    def n(self) -> int:
        return self.g.shape[0]

    def _coerce(self, other):
        if isinstance(other, Jet):
            return other
        return Jet(real_array(other), 0.0)

    def __add__(self, other):
        o = self._coerce(other)
        return Jet(self.v + o.v, self.g + o.g)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._coerce(other)
        return Jet(self.v - o.v, self.g - o.g)

    def __rsub__(self, other):
        o = self._coerce(other)
        return Jet(o.v - self.v, o.g - self.g)

    def __neg__(self):
        return Jet(-self.v, -self.g)

    def __mul__(self, other):
        o = self._coerce(other)
        return Jet(self.v * o.v, self.g * o.v + self.v * o.g)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        inv = 1.0 / o.v
        return Jet(self.v * inv, (self.g - self.v * inv * o.g) * inv)

    def __rtruediv__(self, other):
        o = self._coerce(other)
        return o / self

    def __pow__(self, k):
        if isinstance(k, Jet):
            raise TypeError("jet exponents must be numbers")
        if k == 2:
            return self * self
        vk1 = self.v ** (k - 1)
        return Jet(vk1 * self.v, k * vk1 * self.g)

    def apply(self, f, df):
        return Jet(f, df * self.g)


def exp(x: Jet) -> Jet:
    e = np.exp(x.v)
    return x.apply(e, e)


def cosh(x: Jet) -> Jet:
    return x.apply(np.cosh(x.v), np.sinh(x.v))


def sinh(x: Jet) -> Jet:
    return x.apply(np.sinh(x.v), np.cosh(x.v))


def sin(x: Jet) -> Jet:
    return x.apply(np.sin(x.v), np.cos(x.v))


def sqrt(x: Jet) -> Jet:
    s = np.sqrt(x.v)
    return x.apply(s, 0.5 / s)


def from_partials(value, grads):
    """Jet from a value and a sequence of partial-derivative arrays."""
    value = real_array(value)
    g = np.stack([np.broadcast_to(real_array(x), value.shape) for x in grads])
    return Jet(value, g)
