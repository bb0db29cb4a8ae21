"""Perturbations ``H + delta*F`` that keep or destroy a cross-libration.

On the invariant plane ``x = px = 0`` a perturbation enters the linearised
transverse dynamics through the forcing ``g1 = F_px``, ``g2 = -F_x``.  If
both vanish the libration family survives (cross-preserving).  Otherwise the
first-order shift of the Poincare fixed point is ``M c`` with

    c1 = int (dpsi g1 - psi g2) dt,   c2 = -int (dphi g1 - phi g2) dt,

and the crossing is destroyed whenever ``(M - I) c != 0``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad, solve_ivp

from .errors import IntegrationFailure, PreconditionViolated
from .frames import unit_eigenspace
from .poincare import (
    ATOL,
    METHOD,
    RTOL,
    HamiltonianSystem,
    LibratingOrbit,
    MonodromyData,
    SectionSpec,
    _Compiled,
    _poly1_coeffs,
    find_libration,
    hill_fundamental,
    libration_branch_scan,
    monodromy_at,
)
from .polynomial import Polynomial

log = logging.getLogger(__name__)

IDENTITY_TOL = 1e-7
CONSISTENCY_TOL = 1e-8


@dataclass(frozen=True)
class PerturbationTerm:
    """A perturbation ``F(x, y, px, py)``.

    Either a polynomial, or a callable given together with its two partials
    ``F_px`` and ``F_x`` (each a function of ``(x, y, px, py)``).
    """

    poly: Optional[Polynomial] = None
    F: Optional[Callable] = None
    F_px: Optional[Callable] = None
    F_x: Optional[Callable] = None
    name: str = "F"

    def __post_init__(self):
        if self.poly is None and (self.F_px is None or self.F_x is None):
            raise ValueError("a non-polynomial perturbation needs its partials F_px and F_x")
        if self.poly is not None and self.poly.nvars != 4:
            raise ValueError("F must be a polynomial in (x, y, px, py)")

    @classmethod
    def from_monomials(cls, monomials, name: str = "F") -> "PerturbationTerm":
        """``[{"i":..,"j":..,"k":..,"l":..,"c":..}]`` for ``c x^i y^j px^k py^l``."""
        poly = Polynomial.from_monomials(
            4, [((m.get("i", 0), m.get("j", 0), m.get("k", 0), m.get("l", 0)), m["c"]) for m in monomials])
        return cls(poly=poly, name=name)

    @classmethod
    def named(cls, name: str) -> "PerturbationTerm":
        if name == "rotation":
            return cls(poly=Polynomial(4, {(1, 0, 0, 1): 1.0, (0, 1, 1, 0): -1.0}), name="rotation")
        if name in ("x2y", "symmetric"):
            return cls(poly=Polynomial(4, {(2, 1, 0, 0): 1.0}), name="x2y")
        raise KeyError(f"unknown perturbation {name!r}")

    def __call__(self, x, y, px, py):
        if self.poly is not None:
            return self.poly(x, y, px, py)
        if self.F is None:
            raise ValueError("this perturbation was given by its partials only")
        return self.F(x, y, px, py)

    def combine(self, a: float, other: "PerturbationTerm", b: float) -> "PerturbationTerm":
        if self.poly is None or other.poly is None:
            raise ValueError("only polynomial perturbations can be combined")
        return PerturbationTerm(poly=self.poly.scale(a) + other.poly.scale(b), name=f"{a:g}*{self.name}+{b:g}*{other.name}")


def _plane_poly(poly: Polynomial) -> Polynomial:
    """Restrict a polynomial in (x, y, px, py) to x = px = 0: a polynomial in (y, py)."""
    terms = {}
    for (i, j, k, l), c in poly.terms.items():
        if i == 0 and k == 0:
            terms[(j, l)] = terms.get((j, l), 0.0) + c
    return Polynomial(2, terms)


def g_functions(term: PerturbationTerm) -> tuple[Callable, Callable]:
    """``g1(y, py) = F_px(0, y, 0, py)`` and ``g2(y, py) = -F_x(0, y, 0, py)``."""
    if term.poly is not None:
        g1 = _plane_poly(term.poly.diff(2))
        g2 = _plane_poly(term.poly.diff(0)).scale(-1.0)
        return g1, g2
    return (lambda y, py: term.F_px(0.0, y, 0.0, py)), (lambda y, py: -term.F_x(0.0, y, 0.0, py))


def is_cross_preserving(term: PerturbationTerm, y_range=(-1.0, 1.0), py_range=(-1.0, 1.0),
                        tol: float = 1e-10, n: int = 41) -> bool:
    """Whether both partials vanish on the invariant plane.

    Polynomials are decided exactly (no monomial with ``i + k == 1``); other
    perturbations are sampled on an ``n x n`` grid over the given ranges.
    """
    if term.poly is not None:
        return all(i + k != 1 for (i, _, k, _) in term.poly.terms)
    g1, g2 = g_functions(term)
    ys = np.linspace(*y_range, n)
    ps = np.linspace(*py_range, n)
    return all(abs(g1(y, p)) <= tol and abs(g2(y, p)) <= tol for y in ys for p in ps)


def _is_zero(g) -> bool:
    return isinstance(g, Polynomial) and g.is_zero()


def inhomogeneous_solution(orbit: LibratingOrbit, g1, g2, block: Optional[Callable] = None) -> tuple[float, float]:
    """``(xi(T), eta(T))`` for ``(xi, eta)' = A (xi, eta) + (g1, g2)`` from zero data.

    ``A`` is the plane linearisation of the orbit's system (``[[0, 1], [-f, 0]]``
    without perturbation) unless ``block(y, py)`` is given.
    """
    if _is_zero(g1) and _is_zero(g2):
        return 0.0, 0.0
    system = orbit.system
    dc = np.polynomial.polynomial.polyder(_poly1_coeffs(system.W()))
    if block is None:
        comp = _Compiled(system.plane_block())

        def block(y, py):
            return comp((y, py)).reshape(2, 2)

    def rhs(t, s):
        y, py = s[0], s[1]
        A = block(y, py)
        v = A @ s[2:4] + np.array([float(g1(y, py)), float(g2(y, py))])
        return np.array([py, -np.polynomial.polynomial.polyval(y, dc), v[0], v[1]])

    sol = solve_ivp(rhs, (0.0, orbit.T), [orbit.section.y0, orbit.py0, 0.0, 0.0], method=METHOD,
                    rtol=RTOL, atol=ATOL)
    if sol.status == -1:
        raise IntegrationFailure(sol.message)
    return float(sol.y[2, -1]), float(sol.y[3, -1])


def _integral(fun, T) -> float:
    val, _ = quad(fun, 0.0, T, epsabs=1e-13, epsrel=1e-12, limit=1000)
    return float(val)


def c_integrals(hill: MonodromyData, g1, g2) -> tuple[float, float]:
    """``(c1(T), c2(T))`` by adaptive quadrature on the stored fundamental system."""
    if _is_zero(g1) and _is_zero(g2):
        return 0.0, 0.0

    def parts(t):
        y, py, phi, dphi, psi, dpsi = hill.fundamental(t)
        return float(g1(y, py)), float(g2(y, py)), phi, dphi, psi, dpsi

    def i1(t):
        a, b, phi, dphi, psi, dpsi = parts(t)
        return dpsi * a - psi * b

    def i2(t):
        a, b, phi, dphi, psi, dpsi = parts(t)
        return -(dphi * a - phi * b)

    return _integral(i1, hill.T), _integral(i2, hill.T)


@dataclass
class DestructionReport:
    c1: float
    c2: float
    xi_T: float
    eta_T: float
    monodromy: np.ndarray
    criterion: np.ndarray
    destroys: bool
    degenerate_identity: bool
    shift_destroys: Optional[bool] = None
    consistency_residual: float = 0.0
    eq60_vector: Optional[np.ndarray] = None
    eq60_agrees: Optional[bool] = None
    g_samples: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def c(self) -> np.ndarray:
        return np.array([self.c1, self.c2])

    @property
    def consistent(self) -> bool:
        M = self.monodromy
        return self.consistency_residual <= CONSISTENCY_TOL * (
            1.0 + np.linalg.norm(M, np.inf) * np.linalg.norm(self.c, np.inf))

    @property
    def criteria_agree(self) -> Optional[bool]:
        return None if self.shift_destroys is None else self.shift_destroys == self.destroys

    def to_dict(self) -> dict:
        return {
            "c1": self.c1,
            "c2": self.c2,
            "xi_T": self.xi_T,
            "eta_T": self.eta_T,
            "criterion": [float(v) for v in self.criterion],
            "destroys": self.destroys,
            "degenerate_identity": self.degenerate_identity,
            "eq60_vector": None if self.eq60_vector is None else [float(v) for v in self.eq60_vector],
            "eq60_agrees": self.eq60_agrees,
        }


def destruction_tolerance(M, c) -> float:
    return 1e-6 * (1.0 + np.linalg.norm(M, np.inf)) * (1.0 + np.linalg.norm(c, np.inf))


def eigenspace_test(M, v, tol: float) -> bool:
    """True when ``v`` is *not* in the eigenvalue-one eigenspace of ``M``."""
    M = np.asarray(M, dtype=float)
    v = np.asarray(v, dtype=float)
    if abs(np.trace(M) - 2.0) > 1e-7:
        return bool(np.linalg.norm(v, np.inf) > tol)  # eigenspace is {0}
    e = unit_eigenspace(M)
    return bool(abs(e[0] * v[1] - e[1] * v[0]) > tol)


def destruction_criterion(M, c, tol: Optional[float] = None, xi_eta=None,
                          identity_tol: float = IDENTITY_TOL) -> DestructionReport:
    """``destroys`` iff ``(M - I) c`` is nonzero (a sufficient condition).

    Also evaluates the equivalent test that ``M c`` (the first-order shift of
    the fixed point) leaves the eigenspace of ``M``.
    """
    M = np.asarray(M, dtype=float)
    c = np.asarray(c, dtype=float)
    tol = destruction_tolerance(M, c) if tol is None else tol
    crit = (M - np.eye(2)) @ c
    degenerate = bool(np.max(np.abs(M - np.eye(2))) <= identity_tol)
    destroys = (not degenerate) and bool(np.linalg.norm(crit, np.inf) > tol)
    v = M @ c if xi_eta is None else np.asarray(xi_eta, dtype=float)
    shift_test = None if degenerate else eigenspace_test(M, v, tol)
    resid = 0.0 if xi_eta is None else float(np.linalg.norm(np.asarray(xi_eta) - M @ c, np.inf))
    return DestructionReport(float(c[0]), float(c[1]), float(v[0]), float(v[1]), M, crit, destroys,
                             degenerate, shift_test, resid)


def _sample_g(hill, g1, g2, n=65):
    ts = np.linspace(0.0, hill.T, n)
    Y = hill.fundamental(ts)
    return np.array([[t, float(g1(y, p)), float(g2(y, p))] for t, y, p in zip(ts, Y[0], Y[1])])


def perturbation_report(orbit: LibratingOrbit, hill: MonodromyData, term: PerturbationTerm,
                        tol: Optional[float] = None) -> DestructionReport:
    """Full destruction analysis of one perturbation term at a libration."""
    g1, g2 = g_functions(term)
    c = c_integrals(hill, g1, g2)
    xi_eta = inhomogeneous_solution(orbit, g1, g2)
    rep = destruction_criterion(hill.matrix, c, tol, xi_eta)
    rep.g_samples = _sample_g(hill, g1, g2)
    if not rep.consistent:
        log.warning("variation-of-parameters residual %.3g for %s", rep.consistency_residual, term.name)
    if term.name == "rotation":
        v60 = eq60_vector(hill)
        rep.eq60_vector = v60
        rep.eq60_agrees = eq60_agrees(hill, orbit.section.y0, rep.c, v60)
    return rep


def eq60_vector(hill: MonodromyData) -> np.ndarray:
    """``(int y dpsi dt, -int y dphi dt)`` over one period."""
    def a(t):
        r = hill.fundamental(t)
        return r[0] * r[5]

    def b(t):
        r = hill.fundamental(t)
        return -r[0] * r[3]

    return np.array([_integral(a, hill.T), _integral(b, hill.T)])


def eq60_agrees(hill: MonodromyData, y0: float, c, v60, rel: float = 1e-6) -> bool:
    """For ``F = x py - y px``, integration by parts gives
    ``c = -2 v60 + y0 (psi(T), 1 - phi(T))``; the boundary term is annihilated
    by ``M - I`` whenever the trace is 2.  Checks this identity.
    """
    boundary = y0 * np.array([hill.psi_T, 1.0 - hill.phi_T])
    expected = -2.0 * np.asarray(v60) + boundary
    c = np.asarray(c, dtype=float)
    return bool(np.linalg.norm(c - expected, np.inf) <= rel * (1.0 + np.linalg.norm(c, np.inf)))


def rotation_case(orbit: LibratingOrbit, hill: MonodromyData, tol: Optional[float] = None) -> DestructionReport:
    """Destruction analysis for ``F = x py - y px``, with both vector forms."""
    return perturbation_report(orbit, hill, PerturbationTerm.named("rotation"), tol)


# -- persistence of a crossing under a cross-preserving perturbation ----------


@dataclass
class PersistenceResult:
    delta: float
    eps_star0: float
    eps_star: Optional[float]
    shift: Optional[float]
    predicted_shift: float
    scale: float
    dtr_ddelta: float
    tr_prime: float

    @property
    def persists(self) -> bool:
        return self.eps_star is not None

    @property
    def deviation(self) -> Optional[float]:
        return None if self.shift is None else abs(self.shift - self.predicted_shift)

    def within(self, factor: float = 0.5) -> bool:
        """Crossing persists and its shift matches the first-order prediction to ``factor*|delta|*scale``."""
        return self.persists and self.deviation <= factor * abs(self.delta) * self.scale

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "eps_star0": self.eps_star0,
            "eps_star": self.eps_star,
            "shift": self.shift,
            "predicted_shift": self.predicted_shift,
            "scale": self.scale,
            "dtr_ddelta": self.dtr_ddelta,
            "tr_prime": self.tr_prime,
        }


def persistence_check(system: HamiltonianSystem, term: PerturbationTerm, E_ref: float, eps_star0: float,
                      tr_prime: float, delta: float, section: Optional[SectionSpec] = None,
                      half_width: float = 0.05, n: int = 11, h_delta: float = 1e-4,
                      window=(-10.0, 10.0)) -> PersistenceResult:
    """Rescan ``H + delta*F`` near a known crossing and compare with the implicit-function estimate.

    The first-order shift is ``-delta * (dTr/ddelta) / Tr'``; ``dTr/ddelta`` is a
    central difference of the monodromy trace at the unperturbed crossing.
    """
    if term.poly is None:
        raise PreconditionViolated("persistence rescans need a polynomial perturbation")
    if not is_cross_preserving(term):
        raise PreconditionViolated(f"{term.name} is not cross-preserving")
    base = HamiltonianSystem(system.V, term.poly, 0.0, system.name)
    E = E_ref + eps_star0

    def tr(d):
        return monodromy_at(base.with_delta(d), E, section, window)[1].trace

    dtr = (tr(h_delta) - tr(-h_delta)) / (2 * h_delta)
    scale = abs(dtr / tr_prime)
    predicted = -delta * dtr / tr_prime
    center = eps_star0 + predicted
    scan = libration_branch_scan(base.with_delta(delta), E_ref, (center - half_width, center + half_width), n,
                                 section, classify_crossings=False, window=window, threads=1)
    found = [c.eps_star for c in scan.crossings]
    if not found:
        return PersistenceResult(delta, eps_star0, None, None, predicted, scale, dtr, tr_prime)
    e = min(found, key=lambda v: abs(v - center))
    return PersistenceResult(delta, eps_star0, e, e - eps_star0, predicted, scale, dtr, tr_prime)


def check_perturbation(system: HamiltonianSystem, E0: float, term: PerturbationTerm,
                       section: Optional[SectionSpec] = None, tol: Optional[float] = None) -> DestructionReport:
    """Convenience: libration, Hill system and destruction report at energy ``E0``."""
    orbit = find_libration(system, E0, section)
    hill = hill_fundamental(orbit)
    return perturbation_report(orbit, hill, term, tol)


__all__ = [
    "DestructionReport",
    "PersistenceResult",
    "PerturbationTerm",
    "c_integrals",
    "check_perturbation",
    "destruction_criterion",
    "destruction_tolerance",
    "eigenspace_test",
    "eq60_agrees",
    "eq60_vector",
    "g_functions",
    "inhomogeneous_solution",
    "is_cross_preserving",
    "perturbation_report",
    "persistence_check",
    "rotation_case",
]

