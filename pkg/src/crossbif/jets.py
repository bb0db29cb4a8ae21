"""Truncated multivariate Taylor arithmetic.

A :class:`Jet` stores the Taylor coefficients of a smooth function around a
base point, in a fixed number of variables and up to a fixed total order.
Arithmetic on jets is exact for the truncated expansion, so evaluating any
polynomial (or composition of polynomials, affine maps, square roots and
reciprocals) on *variable* jets yields all partial derivatives up to the
chosen order without any step-size error.

Coefficients are normalised Taylor coefficients: the entry for multi-index
``alpha`` equals ``d^alpha f / alpha!``.
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np


def _multi_indices(nvars: int, degree: int):
    """All exponent tuples of total ``degree`` in ``nvars`` variables (reverse lex)."""
    if nvars == 1:
        yield (degree,)
        return
    for first in range(degree, -1, -1):
        for rest in _multi_indices(nvars - 1, degree - first):
            yield (first,) + rest


class JetSpace:
    """Monomial bookkeeping for jets in ``nvars`` variables up to ``order``."""

    def __init__(self, nvars: int, order: int):
        if nvars < 1 or order < 0:
            raise ValueError("need nvars >= 1 and order >= 0")
        self.nvars = nvars
        self.order = order
        self.monomials = [
            alpha for deg in range(order + 1) for alpha in _multi_indices(nvars, deg)
        ]
        self.index = {alpha: k for k, alpha in enumerate(self.monomials)}
        self.size = len(self.monomials)
        self.degree = np.array([sum(a) for a in self.monomials])
        self.factorial = np.array(
            [math.prod(math.factorial(e) for e in a) for a in self.monomials], dtype=float
        )
        ii, jj, kk = [], [], []
        for i, a in enumerate(self.monomials):
            for j, b in enumerate(self.monomials):
                if sum(a) + sum(b) <= order:
                    ii.append(i)
                    jj.append(j)
                    kk.append(self.index[tuple(x + y for x, y in zip(a, b))])
        self._ii = np.array(ii, dtype=np.intp)
        self._jj = np.array(jj, dtype=np.intp)
        self._kk = np.array(kk, dtype=np.intp)

    def __repr__(self):
        return f"JetSpace(nvars={self.nvars}, order={self.order})"

    def product(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return np.bincount(self._kk, weights=a[self._ii] * b[self._jj], minlength=self.size)

    def constant(self, value: float) -> "Jet":
        c = np.zeros(self.size)
        c[0] = value
        return Jet(self, c)

    def variable(self, i: int, value: float = 0.0) -> "Jet":
        c = np.zeros(self.size)
        c[0] = value
        if self.order >= 1:
            alpha = tuple(1 if k == i else 0 for k in range(self.nvars))
            c[self.index[alpha]] = 1.0
        return Jet(self, c)

    def variables(self, values: Sequence[float]) -> list["Jet"]:
        return [self.variable(i, v) for i, v in enumerate(values)]


@lru_cache(maxsize=None)
def jet_space(nvars: int, order: int) -> JetSpace:
    return JetSpace(nvars, order)


class Jet:
    """Truncated Taylor polynomial living in a :class:`JetSpace`."""

    __slots__ = ("space", "coef")
    __array_ufunc__ = None  # keep numpy scalars from swallowing jets

    def __init__(self, space: JetSpace, coef):
        self.space = space
        self.coef = np.asarray(coef, dtype=float)

    # -- access ---------------------------------------------------------
    @property
    def value(self) -> float:
        return float(self.coef[0])

    def coefficient(self, alpha: Sequence[int]) -> float:
        k = self.space.index.get(tuple(alpha))
        return 0.0 if k is None else float(self.coef[k])

    def derivative(self, alpha: Sequence[int]) -> float:
        alpha = tuple(alpha)
        if sum(alpha) > self.space.order:
            raise ValueError(f"derivative of order {sum(alpha)} beyond jet order {self.space.order}")
        k = self.space.index[alpha]
        return float(self.coef[k] * self.space.factorial[k])

    def copy(self) -> "Jet":
        return Jet(self.space, self.coef.copy())

    def __repr__(self):
        return f"Jet(value={self.value!r}, nvars={self.space.nvars}, order={self.space.order})"

    # -- arithmetic -----------------------------------------------------
    def _lift(self, other):
        if isinstance(other, Jet):
            if other.space is not self.space and (
                other.space.nvars != self.space.nvars or other.space.order != self.space.order
            ):
                raise ValueError("jets live in different spaces")
            return other
        return None

    def __add__(self, other):
        o = self._lift(other)
        if o is not None:
            return Jet(self.space, self.coef + o.coef)
        c = self.coef.copy()
        c[0] += other
        return Jet(self.space, c)

    __radd__ = __add__

    def __neg__(self):
        return Jet(self.space, -self.coef)

    def __pos__(self):
        return self

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        o = self._lift(other)
        if o is not None:
            return Jet(self.space, self.space.product(self.coef, o.coef))
        return Jet(self.space, self.coef * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._lift(other)
        if o is not None:
            return self * o.reciprocal()
        return Jet(self.space, self.coef / other)

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, n):
        if not isinstance(n, (int, np.integer)) or n < 0:
            return self.apply_power(float(n))
        result = self.space.constant(1.0)
        base = self
        while n:
            if n & 1:
                result = result * base
            n >>= 1
            if n:
                base = base * base
        return result

    # -- univariate functions ------------------------------------------
    def apply(self, derivs: Sequence[float]) -> "Jet":
        """Compose with a scalar function given its derivatives at ``self.value``.

        ``derivs[k]`` must be the k-th derivative; at least ``order + 1`` entries.
        """
        u = self.copy()
        u.coef[0] = 0.0
        out = self.space.constant(derivs[0])
        term = self.space.constant(1.0)
        for k in range(1, self.space.order + 1):
            term = term * u
            out = out + term * (derivs[k] / math.factorial(k))
        return out

    def apply_power(self, s: float) -> "Jet":
        a = self.value
        derivs = []
        coeff = 1.0
        for k in range(self.space.order + 1):
            derivs.append(coeff * a ** (s - k))
            coeff *= s - k
        return self.apply(derivs)

    def sqrt(self) -> "Jet":
        if self.value <= 0.0:
            raise ValueError("sqrt of a jet needs a positive base value")
        return self.apply_power(0.5)

    def reciprocal(self) -> "Jet":
        if self.value == 0.0:
            raise ZeroDivisionError("reciprocal of a jet with zero base value")
        return self.apply_power(-1.0)

    # -- structural operations -----------------------------------------
    def embed(self, target: JetSpace) -> "Jet":
        """Re-express in a space with extra trailing variables (same or lower order)."""
        extra = target.nvars - self.space.nvars
        if extra < 0:
            raise ValueError("target space has fewer variables")
        c = np.zeros(target.size)
        for k, alpha in enumerate(self.space.monomials):
            j = target.index.get(alpha + (0,) * extra)
            if j is not None:
                c[j] = self.coef[k]
        return Jet(target, c)

    def integrate(self, var: int) -> "Jet":
        """Antiderivative in variable ``var`` vanishing at zero deviation, truncated."""
        c = np.zeros(self.space.size)
        for k, alpha in enumerate(self.space.monomials):
            if self.coef[k] == 0.0 or sum(alpha) >= self.space.order:
                continue
            beta = list(alpha)
            beta[var] += 1
            c[self.space.index[tuple(beta)]] += self.coef[k] / beta[var]
        return Jet(self.space, c)

    def compose(self, inner: Sequence["Jet"]) -> "Jet":
        """Substitute each deviation variable by a jet from another space.

        The inner jets are the *deviations* fed into this Taylor polynomial;
        for the truncation to be exact their base values should vanish.
        """
        if len(inner) != self.space.nvars:
            raise ValueError("need one inner jet per variable")
        target = inner[0].space
        powers = []
        for w in inner:
            p = [target.constant(1.0)]
            for _ in range(self.space.order):
                p.append(p[-1] * w)
            powers.append(p)
        out = np.zeros(target.size)
        for k, alpha in enumerate(self.space.monomials):
            if self.coef[k] == 0.0:
                continue
            term = None
            for i, e in enumerate(alpha):
                if e:
                    term = powers[i][e] if term is None else term * powers[i][e]
            if term is None:
                out[0] += self.coef[k]
            else:
                out += self.coef[k] * term.coef
        return Jet(target, out)


def pack(jets: Sequence[Jet]) -> np.ndarray:
    return np.concatenate([j.coef for j in jets])


def unpack(space: JetSpace, flat: np.ndarray, n: int) -> list[Jet]:
    return [Jet(space, flat[k * space.size:(k + 1) * space.size]) for k in range(n)]


def is_jet(x) -> bool:
    return isinstance(x, Jet)


def value_of(x) -> float:
    return x.value if isinstance(x, Jet) else float(x)


def jet_of_function(fn: Callable, point: Sequence[float], order: int) -> list[Jet]:
    """Evaluate ``fn`` on variable jets placed at ``point``; returns its outputs."""
    space = jet_space(len(point), order)
    return list(fn(*space.variables(point)))


__all__ = [
    "Jet",
    "JetSpace",
    "jet_space",
    "jet_of_function",
    "is_jet",
    "value_of",
    "pack",
    "unpack",
]
