"""Symplectic map families ``(q, p, eps) -> (Q, P)`` and their derivative jets."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .errors import DomainEscape, NumericalBreakdown, PreconditionViolated
from .jets import Jet, jet_space
from .polynomial import Polynomial

VAR_NAMES = ("q", "p", "e", "d")


class Point3(NamedTuple):
    q: float
    p: float
    eps: float


def as_point(pt) -> Point3:
    q, p, eps = (float(v) for v in pt)
    if not all(math.isfinite(v) for v in (q, p, eps)):
        raise ValueError(f"non-finite point {pt!r}")
    return Point3(q, p, eps)


def _parse_index(spec: str, nvars: int) -> tuple:
    alpha = [0] * nvars
    for ch in spec:
        k = VAR_NAMES.index(ch)
        if k >= nvars:
            raise AttributeError(f"variable {ch!r} not present in this jet")
        alpha[k] += 1
    return tuple(alpha)


class DerivativeJet:
    """All partials of ``Q`` and ``P`` up to ``order`` at one base point.

    Partials are read as attributes: ``jet.Q_p``, ``jet.P_qe`` (``e`` stands
    for eps, ``d`` for the second parameter delta when present).  Mixed
    partials are stored once per multi-index, so symmetry holds by
    construction.
    """

    def __init__(self, point: Point3, Q: Jet, P: Jet, delta: Optional[float] = None):
        self.point = point
        self.Q = Q
        self.P = P
        self.delta = delta
        self.order = Q.space.order
        self.nvars = Q.space.nvars

    def partial(self, comp: str, spec: str = "") -> float:
        jet = {"Q": self.Q, "P": self.P}[comp]
        return jet.derivative(_parse_index(spec, self.nvars))

    def __getattr__(self, name):
        if len(name) >= 2 and name[0] in "QP" and name[1] == "_":
            try:
                return self.partial(name[0], name[2:])
            except (ValueError, KeyError) as exc:
                raise AttributeError(name) from exc
        raise AttributeError(name)

    @property
    def values(self) -> tuple[float, float]:
        return self.Q.value, self.P.value

    def jacobian(self) -> np.ndarray:
        return np.array([[self.Q_q, self.Q_p], [self.P_q, self.P_p]])

    def eps_vector(self) -> np.ndarray:
        return np.array([self.Q_e, self.P_e])

    def as_table(self) -> dict[str, float]:
        """Dense multi-index table ``{'Q_qqe': value, ...}`` of every stored partial."""
        out = {}
        for comp, jet in (("Q", self.Q), ("P", self.P)):
            for k, alpha in enumerate(jet.space.monomials):
                name = "".join(VAR_NAMES[i] * e for i, e in enumerate(alpha))
                out[f"{comp}_{name}" if name else comp] = float(jet.coef[k] * jet.space.factorial[k])
        return out


# -- finite differences ----------------------------------------------------

_STENCILS = {
    0: ((0,), (1.0,)),
    1: ((-1, 1), (-0.5, 0.5)),
    2: ((-1, 0, 1), (1.0, -2.0, 1.0)),
    3: ((-2, -1, 1, 2), (-0.5, 1.0, -1.0, 0.5)),
}


def fd_steps(x: Sequence[float], order: int) -> np.ndarray:
    """Per-axis central-difference step for partials of the given total order."""
    x = np.abs(np.asarray(x, dtype=float))
    if order >= 3:
        return np.full(x.shape, 1e-3)
    return np.maximum(1e-4, 1e-4 * x)


def finite_difference_jet(fn: Callable, x0: Sequence[float], order: int, steps=None) -> list[Jet]:
    """Tensor-product central-difference estimate of all partials up to ``order``.

    ``fn`` maps a point (sequence of floats) to a tuple of outputs.
    ``steps`` optionally maps a total order to an array of per-axis steps.
    Stencil points and sums are kept in ``np.longdouble``; evaluators that
    propagate it (plain polynomial arithmetic does) get a much lower roundoff
    floor on third differences, others just return float64 values.
    """
    x0 = np.asarray(x0, dtype=np.longdouble)
    n = x0.size
    space = jet_space(n, order)
    cache: dict = {}

    def f(x):
        key = tuple(np.round(x, 15))
        if key not in cache:
            cache[key] = np.asarray(fn(x), dtype=np.longdouble)
        return cache[key]

    base = f(x0)
    coefs = np.zeros((base.size, space.size))
    coefs[:, 0] = base
    for k, alpha in enumerate(space.monomials):
        deg = sum(alpha)
        if deg == 0:
            continue
        h = np.asarray(steps[deg] if steps is not None else fd_steps(x0, deg), dtype=np.longdouble)
        acc = np.zeros(base.size, dtype=np.longdouble)
        grids = [_STENCILS[a] for a in alpha]
        idx = [range(len(g[0])) for g in grids]
        for combo in np.ndindex(*[len(r) for r in idx]):
            x = x0.copy()
            w = 1.0
            for axis, c in enumerate(combo):
                off, wt = grids[axis][0][c], grids[axis][1][c]
                x[axis] += off * h[axis]
                w *= wt
            acc += w * f(x)
        scale = np.prod([h[i] ** alpha[i] for i in range(n)])
        coefs[:, k] = (acc / scale).astype(float) / space.factorial[k]
    return [Jet(space, coefs[i]) for i in range(base.size)]


# -- families --------------------------------------------------------------


@dataclass(frozen=True)
class SymplecticFamily:
    """One- or two-parameter family of area-preserving planar maps.

    ``evaluator(q, p, eps)`` (or ``evaluator(q, p, eps, delta)`` for
    two-parameter families) returns ``(Q, P)``.  When ``analytic`` is true the
    evaluator must accept :class:`Jet` arguments, and derivatives are exact.
    Otherwise jets fall back to central finite differences.
    """

    evaluator: Callable
    analytic: bool = True
    two_param: bool = False
    name: str = "family"
    det_tol: float = 1e-9
    meta: dict = field(default_factory=dict, compare=False)

    def __call__(self, q, p, eps, delta=None):
        try:
            if self.two_param:
                return self.evaluator(q, p, eps, 0.0 if delta is None else delta)
            if delta not in (None, 0, 0.0):
                raise ValueError(f"{self.name} has no second parameter")
            return self.evaluator(q, p, eps)
        except DomainEscape:
            raise
        except (ArithmeticError, ValueError) as exc:
            raise DomainEscape(f"{self.name}: evaluation failed at {(q, p, eps)}: {exc}") from exc

    def eval(self, pt, delta=None) -> tuple[float, float]:
        pt = as_point(pt)
        Q, P = self(pt.q, pt.p, pt.eps, delta)
        return float(Q), float(P)

    def _fn_for(self, with_delta: bool, delta: Optional[float]):
        if with_delta:
            return lambda x: self(x[0], x[1], x[2], x[3])
        return lambda x: self(x[0], x[1], x[2], delta)

    def jet(self, pt, order: int = 3, delta: Optional[float] = None, with_delta: bool = False,
            method: str = "auto") -> DerivativeJet:
        """Partials up to ``order``; ``with_delta`` adds delta as a fourth variable."""
        if order not in (0, 1, 2, 3):
            raise ValueError("jet order must be 0..3")
        pt = as_point(pt)
        if with_delta and not self.two_param:
            raise ValueError(f"{self.name} is a one-parameter family")
        d0 = 0.0 if (delta is None and self.two_param) else delta
        x0 = list(pt) + ([d0] if with_delta else [])
        if method == "auto":
            method = "analytic" if self.analytic else "fd"
        if method == "analytic":
            space = jet_space(len(x0), order)
            args = space.variables(x0)
            if not with_delta:
                args.append(d0)
            Q, P = self(*args) if self.two_param else self(*args[:3])
            Q, P = (_as_jet(space, Q), _as_jet(space, P))
        else:
            try:
                Q, P = finite_difference_jet(self._fn_for(with_delta, d0), x0, order)
            except DomainEscape as exc:
                raise NumericalBreakdown(f"finite-difference stencil left the domain: {exc}") from exc
        return DerivativeJet(pt, Q, P, d0)

    def slice(self, delta: float = 0.0) -> "SymplecticFamily":
        """One-parameter family at a fixed value of the second parameter."""
        if not self.two_param:
            return self
        ev = self.evaluator
        return SymplecticFamily(lambda q, p, e: ev(q, p, e, delta), self.analytic, False,
                                f"{self.name}[delta={delta}]", self.det_tol, self.meta)

    def compose_linear(self, left: np.ndarray, right: Optional[np.ndarray] = None,
                       name: Optional[str] = None) -> "SymplecticFamily":
        """Family ``x -> left @ F(right @ x)`` for constant 2x2 matrices (det 1 keeps symplecticity)."""
        L = np.asarray(left, dtype=float)
        R = np.eye(2) if right is None else np.asarray(right, dtype=float)
        ev = self.evaluator
        two = self.two_param

        def composed(q, p, e, *rest):
            qq = R[0, 0] * q + R[0, 1] * p
            pp = R[1, 0] * q + R[1, 1] * p
            Q, P = ev(qq, pp, e, *rest)
            return L[0, 0] * Q + L[0, 1] * P, L[1, 0] * Q + L[1, 1] * P

        return SymplecticFamily(composed, self.analytic, two, name or f"{self.name}*", self.det_tol, self.meta)


def _as_jet(space, x) -> Jet:
    return x if isinstance(x, Jet) else space.constant(float(x))


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


# -- built-in polynomial families -----------------------------------------


def shear_family(g: Polynomial, drift_q: Optional[Polynomial] = None,
                 drift_p: Optional[Polynomial] = None, name: str = "shear") -> SymplecticFamily:
    """``Q = q + p + g + a``, ``P = p + g + b`` with ``g(q, eps[, delta])``, ``a, b`` free of q.

    Polynomials are in two variables ``(q, eps)`` for one-parameter families or
    three ``(q, eps, delta)`` for two-parameter ones.  The Jacobian
    ``[[1 + g_q, 1], [g_q, 1]]`` has determinant one identically.
    """
    nv = g.nvars
    if nv not in (2, 3):
        raise ValueError("g must be a polynomial in (q, eps) or (q, eps, delta)")
    a = drift_q or Polynomial.zero(nv)
    b = drift_p or Polynomial.zero(nv)
    for poly, label in ((a, "drift_q"), (b, "drift_p")):
        if poly.nvars != nv:
            raise ValueError(f"{label} must use the same variables as g")
        if poly.depends_on(0):
            raise ValueError(f"{label} must not depend on q")

    def evaluator(q, p, e, *rest):
        args = (q, e) if nv == 2 else (q, e, rest[0] if rest else 0.0)
        gv = g(*args)
        return q + p + gv + a(*args), p + gv + b(*args)

    return SymplecticFamily(evaluator, analytic=True, two_param=(nv == 3), name=name,
                            meta={"kind": "shear_composition", "g": g, "drift_q": a, "drift_p": b})


def rotated_conjugate(family: SymplecticFamily, theta: float) -> SymplecticFamily:
    """Conjugate ``R(theta) o F o R(-theta)``; eigen-directions rotate by ``theta``."""
    fam = family.compose_linear(rotation(theta), rotation(-theta),
                                name=f"{family.name}@{math.degrees(theta):g}deg")
    return SymplecticFamily(fam.evaluator, fam.analytic, fam.two_param, fam.name, fam.det_tol,
                            {**family.meta, "theta": theta})


def g_poly(*monomials: tuple[int, int, float]) -> Polynomial:
    """Shorthand: ``g_poly((1, 1, 1.0), (2, 0, -1.0))`` is ``eps*q - q**2``."""
    return Polynomial.from_monomials(2, [((i, j), c) for i, j, c in monomials])


BUILTIN_G = {
    "transcritical": g_poly((1, 1, 1.0), (2, 0, -1.0)),
    "forklike": g_poly((1, 1, 1.0), (3, 0, -1.0)),
    "definite": g_poly((2, 0, 1.0), (0, 2, 1.0)),
    "saddle_node": g_poly((0, 1, 1.0), (2, 0, -1.0)),
}


def builtin_family(name: str, theta: float = 0.0) -> SymplecticFamily:
    fam = shear_family(BUILTIN_G[name], name=name)
    return rotated_conjugate(fam, theta) if theta else fam


# -- checks -----------------------------------------------------------------


def check_symplectic(family: SymplecticFamily, pt, tol: Optional[float] = None,
                     method: str = "auto") -> tuple[float, bool]:
    """Return ``(|det J - 1|, passed)`` for the (q, p)-Jacobian at ``pt``."""
    jet = family.jet(pt, order=1, method=method)
    residual = abs(float(np.linalg.det(jet.jacobian())) - 1.0)
    return residual, residual <= (family.det_tol if tol is None else tol)


def check_det_derivative_formula(family: SymplecticFamily, pt, u: str, tol: float = 1e-7,
                                 jet: Optional[DerivativeJet] = None) -> float:
    """Residual of ``Q_qu + P_pu - Q_p P_qu`` at a point where ``J`` is upper unipotent."""
    if u not in ("q", "p", "e", "eps"):
        raise ValueError("u must be one of q, p, eps")
    u = "e" if u == "eps" else u
    jet = jet if jet is not None else family.jet(pt, order=2)
    if abs(jet.Q_q - 1) > tol or abs(jet.P_p - 1) > tol or abs(jet.P_q) > tol:
        raise PreconditionViolated(
            f"need Q_q = P_p = 1 and P_q = 0, got Q_q={jet.Q_q:.3g}, P_p={jet.P_p:.3g}, P_q={jet.P_q:.3g}")
    qu = jet.partial("Q", "q" + u)
    pu = jet.partial("P", "p" + u)
    pqu = jet.partial("P", "q" + u)
    return abs(qu + pu - jet.Q_p * pqu)
