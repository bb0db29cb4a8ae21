"""Poincare maps of 2-DOF Hamiltonians along straight-line librations.

The Hamiltonian is ``H = px^2/2 + py^2/2 + V(x, y) + delta*F(x, y, px, py)``
with polynomial ``V`` that is even to first order in ``x`` (no ``x*y^j``
terms), so the plane ``x = px = 0`` is invariant and carries a one-degree
of freedom oscillation in ``y``.  The section is ``y = y0``; ``(x, px)`` are
the symplectic coordinates and ``eps = E - E0`` is the family parameter.

Derivatives of the map are computed by integrating jet-valued states through
the (polynomial) vector field and correcting the return time by a Taylor
series in time, which gives the exact derivatives of the numerical flow up
to the integrator tolerance.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.optimize import brentq, minimize_scalar

from .classifier import BifurcationReport, Tolerances, classify
from .errors import (
    CrossbifError,
    DomainEscape,
    EnergyForbidden,
    IntegrationFailure,
    NoReturn,
    NoWell,
    PreconditionViolated,
    TurningPointNotFound,
)
from .family import SymplecticFamily
from .jets import Jet, jet_space, pack, unpack
from .polynomial import Polynomial, evaluate_many

log = logging.getLogger(__name__)

RTOL = 1e-11
ATOL = 1e-11
METHOD = "DOP853"
THREADS_ENV = "CROSSBIF_THREADS"


class _Compiled:
    """Vectorised float evaluation of several polynomials sharing variables."""

    def __init__(self, polys):
        self.nvars = polys[0].nvars
        self.exps = []
        self.coefs = []
        for poly in polys:
            keys = list(poly.terms) or [(0,) * self.nvars]
            self.exps.append(np.array(keys, dtype=float))
            self.coefs.append(np.array([poly.terms.get(k, 0.0) for k in keys]))

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.array([c @ np.prod(x ** e, axis=1) for e, c in zip(self.exps, self.coefs)])


@dataclass(frozen=True)
class HamiltonianSystem:
    """``H = (px^2 + py^2)/2 + V(x, y) + delta*F(x, y, px, py)``.

    ``V`` is a polynomial in ``(x, y)``; ``F`` (optional) in ``(x, y, px, py)``.
    ``delta`` is the value used for orbit, monodromy and scan computations; the
    Poincare family can also treat it as a second parameter.
    """

    V: Polynomial
    F: Optional[Polynomial] = None
    delta: float = 0.0
    name: str = "H"

    def __post_init__(self):
        if self.V.nvars != 2:
            raise ValueError("V must be a polynomial in (x, y)")
        bad = [e for e in self.V.terms if e[0] == 1]
        if bad:
            raise PreconditionViolated(
                f"V has terms linear in x {bad}: the y-axis is not invariant (straight-line condition)")
        if self.F is not None and self.F.nvars != 4:
            raise ValueError("F must be a polynomial in (x, y, px, py)")

    def with_delta(self, delta: float) -> "HamiltonianSystem":
        return HamiltonianSystem(self.V, self.F, float(delta), self.name)

    # -- polynomials in (x, y, px, py, d) --------------------------------
    @property
    def H(self) -> Polynomial:
        """Full Hamiltonian in five variables ``(x, y, px, py, d)``."""
        terms = {(0, 0, 2, 0, 0): 0.5, (0, 0, 0, 2, 0): 0.5}
        for (i, j), c in self.V.terms.items():
            terms[(i, j, 0, 0, 0)] = terms.get((i, j, 0, 0, 0), 0.0) + c
        if self.F is not None:
            for (i, j, k, l), c in self.F.terms.items():
                key = (i, j, k, l, 1)
                terms[key] = terms.get(key, 0.0) + c
        return Polynomial(5, terms)

    def vector_field(self) -> list[Polynomial]:
        """``(dx, dy, dpx, dpy)/dt`` as polynomials in ``(x, y, px, py, d)``."""
        H = self.H
        return [H.diff(2), H.diff(3), H.diff(0).scale(-1.0), H.diff(1).scale(-1.0)]

    def energy(self, x, y, px, py, delta=None) -> float:
        return self.H(x, y, px, py, self.delta if delta is None else delta)

    def W(self) -> Polynomial:
        """Effective potential on the invariant plane, as a polynomial in y."""
        terms = {}
        for (i, j), c in self.V.terms.items():
            if i == 0:
                terms[(j,)] = terms.get((j,), 0.0) + c
        if self.F is not None and self.delta != 0.0:
            for (i, j, k, l), c in self.F.terms.items():
                if i == 0 and k == 0:
                    if l:
                        raise PreconditionViolated("F restricted to x = px = 0 depends on py")
                    terms[(j,)] = terms.get((j,), 0.0) + self.delta * c
        return Polynomial(1, terms)

    def V0(self, y: float) -> float:
        return self.V(0.0, y)

    def f_poly(self) -> Polynomial:
        """``f(y) = H_xx(0, y, 0, 0)`` (equal to ``V_xx(0, y)`` when unperturbed)."""
        return _restrict_plane(self.H.diff(0).diff(0), self.delta)

    def f(self, y: float) -> float:
        return self.f_poly()(y)

    def plane_block(self) -> list[Polynomial]:
        """Entries of the linearised (x, px) flow on the plane, in ``(y, py)``.

        Returns ``[a11, a12, a21, a22]`` with ``(xi, eta)' = A (xi, eta)``.
        """
        H = self.H
        Hpx = H.diff(2)
        Hx = H.diff(0)
        polys = [Hpx.diff(0), Hpx.diff(2), Hx.diff(0).scale(-1.0), Hx.diff(2).scale(-1.0)]
        return [_restrict_plane2(p, self.delta) for p in polys]

    def plane_invariant(self) -> bool:
        """Whether ``x = px = 0`` is invariant (true for every cross-preserving F)."""
        if self.F is None or self.delta == 0.0:
            return True
        return all(i + k != 1 for (i, _, k, _) in self.F.terms)


def _restrict_plane(poly: Polynomial, delta: float) -> Polynomial:
    """Restrict a polynomial in (x, y, px, py, d) to x = px = py = 0: a polynomial in y."""
    terms = {}
    for (i, j, k, l, m), c in poly.terms.items():
        if i == 0 and k == 0 and l == 0:
            terms[(j,)] = terms.get((j,), 0.0) + c * delta ** m
    return Polynomial(1, terms)


def _restrict_plane2(poly: Polynomial, delta: float) -> Polynomial:
    """Restrict to x = px = 0: a polynomial in (y, py)."""
    terms = {}
    for (i, j, k, l, m), c in poly.terms.items():
        if i == 0 and k == 0:
            terms[(j, l)] = terms.get((j, l), 0.0) + c * delta ** m
    return Polynomial(2, terms)


def potential_from_monomials(monomials) -> Polynomial:
    """``[{"i": 2, "j": 0, "c": 0.5}, ...]`` -> V(x, y)."""
    return Polynomial.from_monomials(2, [((m["i"], m["j"]), m["c"]) for m in monomials])


def demo_potential(lam: float = 1.0, omega: float = 1.2, alpha: float = 0.5) -> HamiltonianSystem:
    """``V = y^2/2 + lam*y^4/4 + x^2*(omega^2 + alpha*y)/2``."""
    V = Polynomial(2, {(0, 2): 0.5, (0, 4): lam / 4.0, (2, 0): 0.5 * omega ** 2, (2, 1): 0.5 * alpha})
    return HamiltonianSystem(V, name=f"demo(lam={lam:g},omega={omega:g},alpha={alpha:g})")


def decoupled_harmonic(omega: float = 1.0) -> HamiltonianSystem:
    """``V = omega^2 x^2/2 + y^2/2``."""
    return HamiltonianSystem(Polynomial(2, {(2, 0): 0.5 * omega ** 2, (0, 2): 0.5}), name="harmonic")


@dataclass(frozen=True)
class SectionSpec:
    y0: float
    direction: int = 1

    def __post_init__(self):
        if self.direction not in (1, -1):
            raise ValueError("crossing direction must be +1 or -1")


# -- one-dimensional librations ------------------------------------------------


@dataclass
class LibratingOrbit:
    system: HamiltonianSystem
    E0: float
    T: float
    y1: float
    y2: float
    y_min: float
    section: SectionSpec
    py0: float
    sol: object = field(default=None, repr=False)
    energy_drift: float = 0.0
    periodicity_error: float = 0.0

    def state(self, t) -> np.ndarray:
        """``(y, py)`` at time(s) ``t`` in [0, T]."""
        return self.sol.sol(t)

    def quadrature_period(self) -> float:
        return quadrature_period(self.system.W(), self.E0, self.y1, self.y2)


def _poly1_coeffs(W: Polynomial) -> np.ndarray:
    """Coefficients in increasing degree."""
    deg = W.degree
    c = np.zeros(deg + 1)
    for (j,), v in W.terms.items():
        c[j] += v
    return c


def find_well(system: HamiltonianSystem, window=(-10.0, 10.0), near: Optional[float] = None) -> float:
    """Location of a local minimum of the effective potential inside ``window``."""
    W = system.W()
    c = _poly1_coeffs(W)
    dc = np.polynomial.polynomial.polyder(c)
    ddc = np.polynomial.polynomial.polyder(dc)
    lo, hi = window
    roots = np.polynomial.polynomial.polyroots(dc) if len(dc) > 1 else np.array([])
    cands = [r.real for r in np.atleast_1d(roots) if abs(r.imag) < 1e-9 and lo < r.real < hi]
    minima = [y for y in cands if np.polynomial.polynomial.polyval(y, ddc) > 0]
    if not minima:
        raise NoWell(f"effective potential has no well in {window}")
    ref = 0.0 if near is None else near
    y = min(minima, key=lambda r: (abs(r - ref), r))
    res = minimize_scalar(lambda t: np.polynomial.polynomial.polyval(t, c), bracket=None,
                          bounds=(y - 1e-3, y + 1e-3), method="bounded", options={"xatol": 1e-14})
    # the root of W' is more accurate than the bounded minimiser; keep it unless clearly off
    return float(y if abs(res.x - y) < 1e-6 else res.x)


def turning_points(system: HamiltonianSystem, E: float, y_min: float, window=(-10.0, 10.0)):
    W = system.W()
    c = _poly1_coeffs(W)

    def g(y):
        return float(np.polynomial.polynomial.polyval(y, c)) - E

    if g(y_min) >= 0:
        raise NoWell(f"energy {E:.12g} is not above the well minimum {g(y_min) + E:.12g}")
    out = []
    for end in (window[0], window[1]):
        grid = np.linspace(y_min, end, 4001)
        vals = np.array([g(y) for y in grid])
        k = np.nonzero(vals >= 0)[0]
        if len(k) == 0:
            raise TurningPointNotFound(f"no turning point between {y_min:.6g} and {end:.6g} at E={E:.12g}")
        k = k[0]
        out.append(brentq(g, grid[k - 1], grid[k], xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200))
    return min(out), max(out)


def quadrature_period(W: Polynomial, E: float, y1: float, y2: float) -> float:
    """``T = 2 * int_{y1}^{y2} dy / sqrt(2 (E - W))`` with the endpoint factors divided out.

    With ``E - W(y) = (y - y1)(y2 - y) R(y)`` and ``y = m + h sin(theta)`` the
    integrand becomes the smooth ``1 / sqrt(2 R)``.
    """
    c = -_poly1_coeffs(W)
    c[0] += E
    quadratic = np.array([-y1 * y2, y1 + y2, -1.0])  # (y - y1)(y2 - y)
    R, _ = np.polynomial.polynomial.polydiv(c, quadratic)
    m, h = 0.5 * (y1 + y2), 0.5 * (y2 - y1)

    def integrand(theta):
        return 1.0 / math.sqrt(2.0 * np.polynomial.polynomial.polyval(m + h * math.sin(theta), R))

    val, _ = quad(integrand, -math.pi / 2, math.pi / 2, epsabs=1e-14, epsrel=1e-13, limit=200)
    return 2.0 * val


def _two_stage(rhs, state0, direction, y_index, py_index, y0, t_max, dense=False):
    """Integrate to the first turning point of y, then to the next crossing of y = y0.

    Returns ``(t_return, state_at_return, [solutions])``.
    """
    def turn(t, s):
        return s[py_index]

    turn.terminal = True
    turn.direction = -direction

    def cross(t, s):
        return s[y_index] - y0

    cross.terminal = True
    cross.direction = direction

    kw = dict(method=METHOD, rtol=RTOL, atol=ATOL, dense_output=True)
    s1 = solve_ivp(rhs, (0.0, t_max), state0, events=turn, **kw)
    if s1.status == -1:
        raise IntegrationFailure(s1.message)
    if not s1.t_events[0].size:
        raise NoReturn(f"no turning point within t <= {t_max:.6g}")
    t1 = float(s1.t_events[0][0])
    st1 = s1.y_events[0][0]
    s2 = solve_ivp(rhs, (t1, t_max), st1, events=cross, **kw)
    if s2.status == -1:
        raise IntegrationFailure(s2.message)
    if not s2.t_events[0].size:
        raise NoReturn(f"orbit does not return to the section within t <= {t_max:.6g}")
    tr = float(s2.t_events[0][0])
    # one Newton step on y(t) - y0 using the dense output
    st = s2.sol(tr)
    ydot = rhs(tr, st)[y_index]
    if ydot != 0.0:
        tn = tr - (st[y_index] - y0) / ydot
        if t1 <= tn <= s2.t[-1]:
            tr = tn
            st = s2.sol(tr)
    return tr, np.asarray(st, dtype=float), (s1, s2)


def find_libration(system: HamiltonianSystem, E0: float, section: Optional[SectionSpec] = None,
                   window=(-10.0, 10.0)) -> LibratingOrbit:
    """The straight-line periodic orbit on the y-axis at energy ``E0``."""
    y_min = find_well(system, window)
    y1, y2 = turning_points(system, E0, y_min, window)
    section = section or SectionSpec(y_min)
    if not (y1 < section.y0 < y2):
        raise PreconditionViolated(f"section y0={section.y0:.6g} outside the libration range ({y1:.6g}, {y2:.6g})")
    W = system.W()
    c = _poly1_coeffs(W)
    dc = np.polynomial.polynomial.polyder(c)
    rad = 2.0 * (E0 - float(np.polynomial.polynomial.polyval(section.y0, c)))
    if rad <= 0:
        raise EnergyForbidden("section point is not inside the libration")
    py0 = section.direction * math.sqrt(rad)

    def rhs(t, s):
        return np.array([s[1], -np.polynomial.polynomial.polyval(s[0], dc)])

    # rough period from quadrature fixes the time budget
    T_est = quadrature_period(W, E0, y1, y2)
    T, st, _ = _two_stage(rhs, np.array([section.y0, py0]), section.direction, 0, 1, section.y0, 3 * T_est)
    sol = solve_ivp(rhs, (0.0, T), [section.y0, py0], method=METHOD, rtol=RTOL, atol=ATOL,
                    dense_output=True)
    if sol.status == -1:
        raise IntegrationFailure(sol.message)
    ts = np.linspace(0.0, T, 257)
    ys = sol.sol(ts)
    energy = 0.5 * ys[1] ** 2 + np.polynomial.polynomial.polyval(ys[0], c)
    drift = float(np.max(np.abs(energy - E0)))
    if drift > 1e-9 * (abs(E0) + 1.0):
        raise IntegrationFailure(f"energy drift {drift:.3g} along the libration")
    per = float(max(abs(sol.y[0, -1] - section.y0), abs(sol.y[1, -1] - py0)))
    return LibratingOrbit(system, float(E0), float(T), float(y1), float(y2), float(y_min), section,
                          float(py0), sol, drift, per)


# -- Hill equation and monodromy ------------------------------------------------


@dataclass
class MonodromyData:
    phi_T: float
    psi_T: float
    dphi_T: float
    dpsi_T: float
    T: float
    sol: object = field(default=None, repr=False)

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.phi_T, self.psi_T], [self.dphi_T, self.dpsi_T]])

    @property
    def trace(self) -> float:
        return self.phi_T + self.dpsi_T

    @property
    def wronskian(self) -> float:
        return self.phi_T * self.dpsi_T - self.psi_T * self.dphi_T

    def fundamental(self, t) -> np.ndarray:
        """Rows ``(y, py, phi, dphi, psi, dpsi)`` at time(s) ``t``."""
        return self.sol.sol(t)

    def to_dict(self) -> dict:
        return {"phiT": self.phi_T, "psiT": self.psi_T, "dphiT": self.dphi_T, "dpsiT": self.dpsi_T,
                "T": self.T, "trace": self.trace, "wronskian": self.wronskian}


def hill_fundamental(orbit: LibratingOrbit, f: Optional[Callable] = None,
                     block: Optional[Callable] = None, wronskian_tol: float = 1e-9) -> MonodromyData:
    """Fundamental system of ``xi' = a11 xi + a12 eta, eta' = a21 xi + a22 eta`` over one period.

    By default the block is the plane linearisation of the system, which for
    an unperturbed Hamiltonian is the Hill equation ``xi'' + f(y(t)) xi = 0``.
    ``f`` overrides the Hill coefficient; ``block(y, py)`` overrides the whole
    2x2 matrix.  The orbit is integrated jointly so no interpolation enters.
    """
    system = orbit.system
    dc = np.polynomial.polynomial.polyder(_poly1_coeffs(system.W()))
    if block is None and f is None:
        comp = _Compiled(system.plane_block())

        def block(y, py):
            return comp((y, py)).reshape(2, 2)
    elif block is None:
        def block(y, py):
            return np.array([[0.0, 1.0], [-float(f(y)), 0.0]])

    def rhs(t, s):
        y, py = s[0], s[1]
        A = block(y, py)
        phi = s[2:4]
        psi = s[4:6]
        return np.concatenate(([py, -np.polynomial.polynomial.polyval(y, dc)], A @ phi, A @ psi))

    s0 = np.array([orbit.section.y0, orbit.py0, 1.0, 0.0, 0.0, 1.0])
    sol = solve_ivp(rhs, (0.0, orbit.T), s0, method=METHOD, rtol=RTOL, atol=ATOL, dense_output=True)
    if sol.status == -1:
        raise IntegrationFailure(sol.message)
    end = sol.y[:, -1]
    data = MonodromyData(float(end[2]), float(end[4]), float(end[3]), float(end[5]), orbit.T, sol)
    drift = abs(data.wronskian - 1.0)
    if drift > wronskian_tol:
        raise IntegrationFailure(f"Wronskian drift {drift:.3g} exceeds {wronskian_tol:.1g}")
    return data


# -- the Poincare map -----------------------------------------------------------


class PoincareMap:
    """Evaluator ``(q, p, eps[, delta]) -> (Q, P)`` for the section ``y = y0``.

    Floats take a plain ODE path.  Jet arguments are propagated through the
    jet-valued flow; the return time is corrected by a Taylor expansion in
    time so that all derivatives include the dependence of the return time
    on the initial point.
    """

    def __init__(self, system: HamiltonianSystem, E0: float, section: Optional[SectionSpec] = None,
                 chart_radius: Optional[float] = None, window=(-10.0, 10.0)):
        self.system = system
        self.E0 = float(E0)
        self.window = window
        if section is None:
            section = SectionSpec(find_well(system, window))
        self.section = section
        self.chart_radius = chart_radius
        self._fields = system.vector_field()
        self._compiled = _Compiled(self._fields)
        self._H = system.H
        self._dH_dpy = self._H.diff(3)
        self._T_ref = None

    @property
    def T_ref(self) -> float:
        if self._T_ref is None:
            self._T_ref = find_libration(self.system, self.E0, self.section, self.window).T
        return self._T_ref

    # -- lifting ---------------------------------------------------------
    def lift(self, q, p, eps, delta=None):
        """Initial state ``(x, y, px, py)`` on the section; jets give jet states."""
        d = self.system.delta if delta is None else delta
        y0 = self.section.y0
        E = self.E0 + eps
        rad = 2.0 * (E - self.system.V(q, y0)) - p * p
        radv = rad.value if isinstance(rad, Jet) else float(rad)
        Fdep = self.system.F is not None and (
            isinstance(d, Jet) or float(d) != 0.0)
        if not Fdep:
            if radv <= 0.0:
                raise EnergyForbidden(f"negative radicand {radv:.3g} at {(_v(q), _v(p), _v(eps))}")
            py = rad.sqrt() if isinstance(rad, Jet) else math.sqrt(rad)
            return q, y0, p, py * self.section.direction
        # general F: Newton on H(q, y0, p, py, d) = E, started from the unperturbed root
        if radv <= 0.0:
            raise EnergyForbidden(f"negative radicand {radv:.3g} at {(_v(q), _v(p), _v(eps))}")
        pyv = self.section.direction * math.sqrt(radv)
        qv, pv, dv, Ev = _v(q), _v(p), _v(d), _v(E)
        for _ in range(50):
            g = self._H(qv, y0, pv, pyv, dv) - Ev
            dg = self._dH_dpy(qv, y0, pv, pyv, dv)
            if dg == 0.0:
                break
            step = g / dg
            pyv -= step
            if abs(step) <= 1e-15 * (1 + abs(pyv)):
                break
        if not math.isfinite(pyv) or pyv * self.section.direction <= 0:
            raise EnergyForbidden("no section momentum with the requested crossing direction")
        if not any(isinstance(a, Jet) for a in (q, p, eps, d)):
            return q, y0, p, pyv
        space = next(a.space for a in (q, p, eps, d) if isinstance(a, Jet))
        py = space.constant(pyv)
        dg0 = self._dH_dpy(qv, y0, pv, pyv, dv)
        for _ in range(space.order + 2):
            py = py - (self._H(q, y0, p, py, d) - E) * (1.0 / dg0)
        return q, y0, p, py

    # -- float path ------------------------------------------------------
    def _rhs(self, delta):
        comp = self._compiled

        def rhs(t, s):
            return comp((s[0], s[1], s[2], s[3], delta))

        return rhs

    def _check_chart(self, q, p):
        if self.chart_radius is not None and math.hypot(q, p) > self.chart_radius:
            raise DomainEscape(f"(q, p) = ({q:.3g}, {p:.3g}) outside the chart radius {self.chart_radius:g}")

    def return_state(self, q: float, p: float, eps: float, delta: Optional[float] = None):
        """``(t_return, state)`` for float input."""
        d = self.system.delta if delta is None else float(delta)
        self._check_chart(q, p)
        s0 = np.array(self.lift(q, p, eps, d), dtype=float)
        rhs = self._rhs(d)
        t, st, _ = _two_stage(rhs, s0, self.section.direction, 1, 3, self.section.y0, 3.0 * self.T_ref)
        self._check_chart(st[0], st[2])
        return t, st

    def __call__(self, q, p, eps, delta=None):
        args = (q, p, eps) + (() if delta is None else (delta,))
        if not any(isinstance(a, Jet) for a in args):
            _, st = self.return_state(float(q), float(p), float(eps), delta)
            return float(st[0]), float(st[2])
        return self._jet_call(q, p, eps, delta)

    # -- jet path --------------------------------------------------------
    def _jet_call(self, q, p, eps, delta):
        space = next(a.space for a in (q, p, eps, delta) if isinstance(a, Jet))
        d = self.system.delta if delta is None else delta
        q, p, eps = (a if isinstance(a, Jet) else space.constant(float(a)) for a in (q, p, eps))
        t_ret, _ = self.return_state(q.value, p.value, eps.value, _v(d))
        state0 = [a if isinstance(a, Jet) else space.constant(float(a)) for a in self.lift(q, p, eps, d)]
        fields = self._fields

        def rhs(t, flat):
            s = unpack(space, flat, 4)
            out = evaluate_many(fields, [s[0], s[1], s[2], s[3], d])
            return np.concatenate([o.coef if isinstance(o, Jet) else _const(space, o) for o in out])

        sol = solve_ivp(rhs, (0.0, t_ret), pack(state0), method=METHOD, rtol=RTOL, atol=ATOL)
        if sol.status == -1:
            raise IntegrationFailure(sol.message)
        end = unpack(space, sol.y[:, -1], 4)

        # Taylor series of the flow in the extra time variable tau (Picard iteration)
        ext = jet_space(space.nvars + 1, space.order)
        X0 = [s.embed(ext) for s in end]
        dj = d.embed(ext) if isinstance(d, Jet) else d
        X = X0
        for _ in range(space.order + 1):
            F = evaluate_many(fields, [X[0], X[1], X[2], X[3], dj])
            X = [x0 + (fk if isinstance(fk, Jet) else ext.constant(fk)).integrate(space.nvars)
                 for x0, fk in zip(X0, F)]
        # solve y(z, tau(z)) = y0 for the jet tau(z)
        ydot = float(self._compiled([s.value for s in end] + [_v(d)])[1])
        if ydot == 0.0:
            raise IntegrationFailure("tangential return to the section")
        zs = [space.variable(i, 0.0) for i in range(space.nvars)]
        tau = space.constant(0.0)
        for _ in range(space.order + 2):
            tau = tau - (X[1].compose(zs + [tau]) - self.section.y0) * (1.0 / ydot)
        Q = X[0].compose(zs + [tau])
        P = X[2].compose(zs + [tau])
        return Q, P


def _v(x) -> float:
    return x.value if isinstance(x, Jet) else float(x)


def _const(space, value) -> np.ndarray:
    c = np.zeros(space.size)
    c[0] = float(value)
    return c


def poincare_family(system: HamiltonianSystem, E0: float, section: Optional[SectionSpec] = None,
                    chart_radius: Optional[float] = None, two_param: bool = False,
                    window=(-10.0, 10.0)) -> SymplecticFamily:
    """The Poincare map as a (one- or two-parameter) symplectic family with exact jets."""
    pm = PoincareMap(system, E0, section, chart_radius, window)
    if two_param and system.F is None:
        raise PreconditionViolated("a two-parameter Poincare family needs a perturbation F")
    return SymplecticFamily(pm, analytic=True, two_param=two_param, name=f"poincare[{system.name}]",
                            det_tol=1e-6, meta={"poincare": pm, "E0": float(E0), "y0": pm.section.y0})


def poincare_map(system: HamiltonianSystem, section: SectionSpec, pt, E0: float,
                 delta: Optional[float] = None) -> tuple[float, float]:
    q, p, eps = pt
    return PoincareMap(system, E0, section)(float(q), float(p), float(eps), delta)


def lift_section_point(system: HamiltonianSystem, section: SectionSpec, pt, E0: float):
    q, p, eps = (float(v) for v in pt)
    pm = PoincareMap(system, E0, section)
    return tuple(float(v) for v in pm.lift(q, p, eps))


# -- scanning the libration branch ---------------------------------------------


@dataclass
class ScanRow:
    eps: float
    T: float
    monodromy: MonodromyData

    @property
    def trace(self) -> float:
        return self.monodromy.trace


@dataclass
class LibrationCrossing:
    eps_star: float
    tr_prime: float
    tr_prime_fd: float
    T: float
    monodromy: MonodromyData
    report: Optional[BifurcationReport] = None

    def to_dict(self) -> dict:
        return {
            "eps_star": self.eps_star,
            "tr_prime": self.tr_prime,
            "tr_prime_fd": self.tr_prime_fd,
            "T": self.T,
            "monodromy": self.monodromy.to_dict(),
            "classification": None if self.report is None else self.report.to_dict(),
        }


@dataclass
class LibrationScan:
    E_ref: float
    section: SectionSpec
    rows: list
    crossings: list
    flat_trace: bool = False
    boundary: Optional[str] = None

    @property
    def eps(self) -> np.ndarray:
        return np.array([r.eps for r in self.rows])

    @property
    def traces(self) -> np.ndarray:
        return np.array([r.trace for r in self.rows])

    def csv_rows(self):
        for r in self.rows:
            m = r.monodromy
            yield (r.eps, r.T, m.trace, m.phi_T, m.psi_T, m.dphi_T, m.dpsi_T)


def monodromy_at(system: HamiltonianSystem, E: float, section: SectionSpec,
                 window=(-10.0, 10.0)) -> tuple[LibratingOrbit, MonodromyData]:
    orbit = find_libration(system, E, section, window)
    return orbit, hill_fundamental(orbit)


def _scan_one(args):
    system, E, section, window = args
    try:
        orbit, mono = monodromy_at(system, E, section, window)
    except CrossbifError as exc:
        return exc
    return orbit.T, mono


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def libration_branch_scan(system: HamiltonianSystem, E_ref: float, eps_range, n: int,
                          section: Optional[SectionSpec] = None, classify_crossings: bool = True,
                          tols: Tolerances = Tolerances(), flat_tol: float = 1e-9,
                          window=(-10.0, 10.0), threads: Optional[int] = None) -> LibrationScan:
    """Trace ``Tr(eps) = phi(T) + dpsi(T)`` along the libration branch ``(0, 0, eps)``.

    Sign changes of ``Tr - 2`` are refined by Brent's method and classified
    through the Poincare family.  The scan stops at the first energy where
    the libration cannot be computed and records why.
    """
    if not system.plane_invariant():
        raise PreconditionViolated("the perturbation does not keep x = px = 0 invariant")
    section = section or SectionSpec(find_well(system, window))
    eps_grid = np.linspace(float(eps_range[0]), float(eps_range[1]), int(n))
    jobs = [(system, E_ref + e, section, window) for e in eps_grid]
    threads = thread_count() if threads is None else threads
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(_scan_one, jobs))
    else:
        results = [_scan_one(j) for j in jobs]
    rows = []
    boundary = None
    for e, res in zip(eps_grid, results):
        if isinstance(res, Exception):
            boundary = f"stopped at eps={e:.12g}: {type(res).__name__}: {res}"
            break
        rows.append(ScanRow(float(e), res[0], res[1]))
    scan = LibrationScan(float(E_ref), section, rows, [], boundary=boundary)
    if not rows:
        return scan
    d = scan.traces - 2.0
    if np.all(np.abs(d) <= flat_tol):
        scan.flat_trace = True
        return scan

    def phi(e):
        return monodromy_at(system, E_ref + e, section, window)[1].trace - 2.0

    for i in range(len(rows) - 1):
        if d[i] == 0.0 or d[i] * d[i + 1] < 0:
            a, b = rows[i].eps, rows[i + 1].eps
            if d[i] == 0.0:
                e_star = a
            else:
                e_star = brentq(phi, a, b, xtol=1e-14, rtol=8.9e-16, maxiter=200)
            orbit, mono = monodromy_at(system, E_ref + e_star, section, window)
            h = 1e-4
            tr_fd = (phi(e_star + h) - phi(e_star - h)) / (2 * h)
            crossing = LibrationCrossing(float(e_star), float(tr_fd), float(tr_fd), orbit.T, mono)
            if classify_crossings:
                fam = poincare_family(system, E_ref, section, window=window)
                jet = fam.jet((0.0, 0.0, e_star), order=3)
                crossing.tr_prime = float(jet.Q_qe + jet.P_pe)
                crossing.report = classify(fam, (0.0, 0.0, e_star), tols)
            scan.crossings.append(crossing)
    return scan


__all__ = [
    "HamiltonianSystem",
    "LibrationCrossing",
    "LibrationScan",
    "LibratingOrbit",
    "MonodromyData",
    "PoincareMap",
    "SectionSpec",
    "decoupled_harmonic",
    "demo_potential",
    "find_libration",
    "find_well",
    "hill_fundamental",
    "libration_branch_scan",
    "lift_section_point",
    "monodromy_at",
    "poincare_family",
    "poincare_map",
    "potential_from_monomials",
    "quadrature_period",
    "thread_count",
    "turning_points",
]
