"""Truncated bivariate Taylor arithmetic in (t, x) through total order 3.

A :class:`Jet3` stores the ten normalized Taylor coefficients
``a[i, j] = d^i/dt^i d^j/dx^j f / (i! j!)`` for ``i + j <= 3``. Any trailing
array shape is a batch shape, so one jet can describe a whole grid of
expansion points. Products are truncated Cauchy products, which makes the
arithmetic exact for polynomials of total degree at most 3 and exact to
rounding for the derivatives of any smooth composition.
"""

from math import factorial

import numpy as np

ORDER = 3

# Slot order: degree-major, then decreasing power of t.
SLOTS = tuple((i, d - i) for d in range(ORDER + 1) for i in range(d, -1, -1))
INDEX = {ij: k for k, ij in enumerate(SLOTS)}
NSLOT = len(SLOTS)

SLOT_NAMES = {
    (0, 0): "E",
    (1, 0): "Et",
    (0, 1): "Ex",
    (2, 0): "Ett",
    (1, 1): "Ext",
    (0, 2): "Exx",
    (3, 0): "Ettt",
    (2, 1): "Extt",
    (1, 2): "Exxt",
    (0, 3): "Exxx",
}

_FACT = np.array([factorial(i) * factorial(j) for i, j in SLOTS], dtype=float)


def _product_matrix():
    m = np.zeros((NSLOT, NSLOT * NSLOT))
    for p, (ip, jp) in enumerate(SLOTS):
        for q, (iq, jq) in enumerate(SLOTS):
            k = INDEX.get((ip + iq, jp + jq))
            if k is not None:
                m[k, p * NSLOT + q] = 1.0
    return m


_PRODUCT = _product_matrix()


def _expand(c, ndim):
    return c.reshape(c.shape + (1,) * (ndim - c.ndim)) if c.ndim < ndim else c


class Jet3:
    """Normalized Taylor coefficients of a function of (t, x), batch-aware.

    ``coef`` has shape ``(10, *batch)``. Use :meth:`derivative` or
    :meth:`derivatives` to read partial derivatives.
    """

    __slots__ = ("coef",)
    __array_priority__ = 100

    def __init__(self, coef):
        coef = np.asarray(coef, dtype=float)
        if coef.shape[:1] != (NSLOT,):
            raise ValueError(f"expected leading axis of length {NSLOT}, got {coef.shape}")
        self.coef = coef

    # construction

    @classmethod
    def constant(cls, value):
        value = np.asarray(value, dtype=float)
        coef = np.zeros((NSLOT,) + value.shape)
        coef[0] = value
        return cls(coef)

    @classmethod
    def variable_t(cls, t):
        """Jet of the coordinate function (t, x) -> t at the points ``t``."""
        t = np.asarray(t, dtype=float)
        coef = np.zeros((NSLOT,) + t.shape)
        coef[0] = t
        coef[INDEX[1, 0]] = 1.0
        return cls(coef)

    @classmethod
    def variable_x(cls, x):
        """Jet of the coordinate function (t, x) -> x at the points ``x``."""
        x = np.asarray(x, dtype=float)
        coef = np.zeros((NSLOT,) + x.shape)
        coef[0] = x
        coef[INDEX[0, 1]] = 1.0
        return cls(coef)

    @classmethod
    def from_derivatives(cls, d):
        """Build from a ``(10, *batch)`` array of partial derivatives."""
        d = np.asarray(d, dtype=float)
        return cls(d / _FACT.reshape((NSLOT,) + (1,) * (d.ndim - 1)))

    # access

    @property
    def shape(self):
        return self.coef.shape[1:]

    @property
    def value(self):
        return self.coef[0]

    def derivative(self, i, j):
        """Partial derivative d^i/dt^i d^j/dx^j at the expansion point."""
        k = INDEX[i, j]
        return self.coef[k] * _FACT[k]

    def derivatives(self):
        """All ten partials as an array of shape ``(10, *batch)`` in :data:`SLOTS` order."""
        return self.coef * _FACT.reshape((NSLOT,) + (1,) * (self.coef.ndim - 1))

    def __getitem__(self, key):
        if not isinstance(key, tuple):
            key = (key,)
        return Jet3(self.coef[(slice(None),) + key])

    def __repr__(self):
        return f"Jet3(shape={self.shape}, value={self.value!r})"

    # arithmetic

    def _coerce(self, other):
        if isinstance(other, Jet3):
            return other
        return Jet3.constant(other)

    def __add__(self, other):
        other = self._coerce(other)
        n = max(self.coef.ndim, other.coef.ndim)
        return Jet3(_expand(self.coef, n) + _expand(other.coef, n))

    __radd__ = __add__

    def __neg__(self):
        return Jet3(-self.coef)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, Jet3):
            other = np.asarray(other, dtype=float)
            return Jet3(self.coef * other[None, ...])
        a, b = np.broadcast_arrays(self.coef, other.coef)
        batch = a.shape[1:]
        outer = a[:, None] * b[None, :]
        out = _PRODUCT @ outer.reshape(NSLOT * NSLOT, -1)
        return Jet3(out.reshape((NSLOT,) + batch))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet3):
            other = np.asarray(other, dtype=float)
            return Jet3(self.coef / other[None, ...])
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self._coerce(other) * self.reciprocal()

    def __pow__(self, n):
        if not isinstance(n, int) or n < 0:
            raise ValueError("only non-negative integer powers are supported")
        out = Jet3.constant(np.ones(self.shape))
        base = self
        while n:
            if n & 1:
                out = out * base
            n >>= 1
            if n:
                base = base * base
        return out

    def compose(self, f0, f1, f2, f3):
        """Apply a scalar function given its value and first three derivatives
        at ``self.value``."""
        h = Jet3(np.concatenate([np.zeros((1,) + self.shape), self.coef[1:]]))
        h2 = h * h
        h3 = h2 * h
        out = h * np.asarray(f1, float) + h2 * (np.asarray(f2, float) / 2.0) + h3 * (np.asarray(f3, float) / 6.0)
        out.coef[0] = np.broadcast_to(np.asarray(f0, float), self.shape)
        return out

    def reciprocal(self):
        v = self.value
        r = 1.0 / v
        return self.compose(r, -r * r, 2.0 * r**3, -6.0 * r**4)

    def exp(self):
        e = np.exp(self.value)
        return self.compose(e, e, e, e)

    def sum(self, axis):
        """Sum over a batch axis."""
        if axis < 0:
            axis += len(self.shape)
        return Jet3(self.coef.sum(axis=axis + 1))

    def isfinite(self):
        return bool(np.all(np.isfinite(self.coef)))


def stack(jets, axis=0):
    """Stack jets along a new batch axis."""
    if axis < 0:
        axis += len(jets[0].shape) + 1
    return Jet3(np.stack([j.coef for j in jets], axis=axis + 1))
