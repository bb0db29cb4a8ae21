"""Sparse multivariate polynomials that evaluate on floats and on jets."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence


@dataclass(frozen=True)
class Polynomial:
    """Polynomial ``sum c * prod x_k**e_k`` stored as ``{exponents: coefficient}``.

    Evaluation only uses ``+`` and ``*``, so arguments may be floats, numpy
    scalars or :class:`~crossbif.jets.Jet` objects.
    """

    nvars: int
    terms: Mapping[tuple, float] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for exps, c in dict(self.terms).items():
            exps = tuple(int(e) for e in exps)
            if len(exps) != self.nvars or min(exps, default=0) < 0:
                raise ValueError(f"bad exponent tuple {exps} for {self.nvars} variables")
            c = float(c)
            if c != 0.0:
                clean[exps] = clean.get(exps, 0.0) + c
        object.__setattr__(self, "terms", {k: v for k, v in sorted(clean.items()) if v != 0.0})

    @classmethod
    def from_monomials(cls, nvars: int, monomials: Iterable[tuple[Sequence[int], float]]):
        acc: dict = {}
        for exps, c in monomials:
            exps = tuple(exps)
            acc[exps] = acc.get(exps, 0.0) + float(c)
        return cls(nvars, acc)

    @classmethod
    def zero(cls, nvars: int) -> "Polynomial":
        return cls(nvars, {})

    # -- algebra ----------------------------------------------------------
    def __add__(self, other: "Polynomial") -> "Polynomial":
        if other.nvars != self.nvars:
            raise ValueError("variable count mismatch")
        acc = dict(self.terms)
        for k, v in other.terms.items():
            acc[k] = acc.get(k, 0.0) + v
        return Polynomial(self.nvars, acc)

    def scale(self, s: float) -> "Polynomial":
        return Polynomial(self.nvars, {k: s * v for k, v in self.terms.items()})

    def diff(self, var: int) -> "Polynomial":
        acc = {}
        for exps, c in self.terms.items():
            e = exps[var]
            if e:
                new = list(exps)
                new[var] -= 1
                acc[tuple(new)] = c * e
        return Polynomial(self.nvars, acc)

    def restrict(self, fixed: Mapping[int, float]) -> "Polynomial":
        """Substitute constants for some variables, keeping the variable count."""
        acc: dict = {}
        for exps, c in self.terms.items():
            new = list(exps)
            for var, val in fixed.items():
                c = c * val ** new[var]
                new[var] = 0
            acc[tuple(new)] = acc.get(tuple(new), 0.0) + c
        return Polynomial(self.nvars, acc)

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def is_zero(self) -> bool:
        return not self.terms

    def depends_on(self, var: int) -> bool:
        return any(e[var] for e in self.terms)

    # -- evaluation -------------------------------------------------------
    def __call__(self, *args):
        return evaluate_many([self], args)[0]

    def to_monomials(self) -> list[dict]:
        return [{"exponents": list(k), "c": v} for k, v in self.terms.items()]


def evaluate_many(polys: Sequence[Polynomial], args: Sequence):
    """Evaluate several polynomials on the same arguments, sharing powers."""
    nvars = len(args)
    powers: list[list] = [[1.0] for _ in range(nvars)]

    def power(var, e):
        p = powers[var]
        while len(p) <= e:
            p.append(args[var] if len(p) == 1 else p[-1] * args[var])
        return p[e]

    out = []
    for poly in polys:
        if poly.nvars != nvars:
            raise ValueError(f"polynomial in {poly.nvars} variables called with {nvars}")
        total = 0.0
        for exps, c in poly.terms.items():
            term = None
            for var, e in enumerate(exps):
                if e:
                    pe = power(var, e)
                    term = pe if term is None else term * pe
            total = total + (c if term is None else term * c)
        out.append(total)
    return out
