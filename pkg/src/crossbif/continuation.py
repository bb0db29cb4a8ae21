"""Fixed points, branches over eps, trace functions and the branch propositions."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .classifier import BifurcationReport, Kind, Tolerances, classify
from .errors import (
    CrossbifError,
    DomainEscape,
    NoConvergence,
    NotCross,
    PreconditionViolated,
    SeedNotFixed,
    SingularJacobian,
)
from .family import SymplecticFamily, as_point
from .frames import AdaptedFrame

log = logging.getLogger(__name__)

FIT_HALF_SPACING = 5e-4


@dataclass
class Branch:
    """Ordered fixed-point samples ``(eps, q, p)`` in original coordinates.

    ``by_eps`` branches are graphs over eps.  ``by_q`` branches (the line
    tangent to the eigenspace at a fork-like cross) are parametrised by the
    adapted coordinate ``q~``, stored in ``params``.
    """

    samples: np.ndarray
    parametrization: str = "by_eps"
    trace: Optional[np.ndarray] = None
    params: Optional[np.ndarray] = None
    fits: dict = field(default_factory=dict)
    boundary: Optional[str] = None
    flat_trace: bool = False
    frame: Optional[AdaptedFrame] = None

    @property
    def eps(self) -> np.ndarray:
        return self.samples[:, 0]

    @property
    def q(self) -> np.ndarray:
        return self.samples[:, 1]

    @property
    def p(self) -> np.ndarray:
        return self.samples[:, 2]

    def __len__(self):
        return len(self.samples)

    def tangent(self) -> Optional[np.ndarray]:
        """Fitted unit tangent at the fit centre, in original (q, p, eps)."""
        if self.parametrization == "by_eps" and "q_prime" in self.fits:
            v = np.array([self.fits["q_prime"], self.fits["p_prime"], 1.0])
        elif self.parametrization == "by_q" and "eps_B_prime" in self.fits:
            v = self.frame.tangent_to_original([1.0, self.fits["p_B_prime"], self.fits["eps_B_prime"]])
        else:
            return None
        return v / np.linalg.norm(v)


@dataclass
class CrossingReport:
    eps_star: float
    point: tuple
    tr_prime: float
    trace_residual: float
    report: Optional[BifurcationReport] = None

    def to_dict(self) -> dict:
        return {
            "eps_star": self.eps_star,
            "point": list(self.point),
            "tr_prime": self.tr_prime,
            "trace_residual": self.trace_residual,
            "classification": None if self.report is None else self.report.to_dict(),
        }


# -- Newton ------------------------------------------------------------------


def _residual_and_jacobian(family, q, p, eps):
    jet = family.jet((q, p, eps), order=1)
    Qv, Pv = jet.values
    return np.array([Qv - q, Pv - p]), jet.jacobian() - np.eye(2), jet


def newton_fixed_point(family: SymplecticFamily, eps: float, guess, tol: float = 1e-9,
                       max_iter: int = 60) -> np.ndarray:
    """Solve ``(Q - q, P - p) = 0`` at fixed ``eps``; returns ``array([q, p])``.

    A final polishing step is taken once the tolerance is met, as long as the
    Jacobian is usable and the residual does not grow.
    """
    x = np.array(guess, dtype=float)
    for _ in range(max_iter + 1):
        G, A, _ = _residual_and_jacobian(family, x[0], x[1], eps)
        res = np.max(np.abs(G))
        det = np.linalg.det(A)
        singular = abs(det) <= 1e-14 * (1.0 + float(np.sum(A * A)))
        if res <= tol:
            if res > 0.0 and not singular:
                y = x - np.linalg.solve(A, G)
                try:
                    G2, _, _ = _residual_and_jacobian(family, y[0], y[1], eps)
                    if np.max(np.abs(G2)) <= res:
                        x = y
                except DomainEscape:
                    pass
            return x
        if singular:
            raise SingularJacobian(f"det(J - I) = {det:.3g} at eps={eps:.6g}, x={x}")
        x = x - np.linalg.solve(A, G)
        if not np.all(np.isfinite(x)):
            break
    raise NoConvergence(f"Newton did not converge at eps={eps:.6g} from {tuple(guess)}")


def _branch_slope(family, x, eps):
    """dx/deps from the implicit function theorem, or None near a singular point."""
    jet = family.jet((x[0], x[1], eps), order=1)
    A = jet.jacobian() - np.eye(2)
    if abs(np.linalg.det(A)) <= 1e-8:
        return None
    return -np.linalg.solve(A, jet.eps_vector())


def _march(family, x, e, end, step, tol, max_halvings):
    out = []
    direction = 1.0 if end > e else -1.0
    prev = None
    h = abs(step)
    boundary = None
    while direction * (end - e) > 1e-15:
        slope = _branch_slope(family, x, e)
        if slope is None and prev is not None:
            slope = (x - prev[1]) / (e - prev[0])
        if slope is None:
            slope = np.zeros(2)
        for _ in range(max_halvings + 1):
            target = e + direction * min(h, abs(end - e))
            pred = x + slope * (target - e)
            try:
                xn = newton_fixed_point(family, target, pred, tol)
            except (NoConvergence, SingularJacobian, DomainEscape) as exc:
                log.debug("step failed at eps=%g: %s", target, exc)
                h /= 2
                continue
            if np.linalg.norm(xn - pred) > 0.5 * abs(target - e) * max(1.0, np.linalg.norm(slope)):
                h /= 2
                continue
            break
        else:
            boundary = f"continuation stopped near eps={e:.12g}"
            break
        prev = (e, x)
        e, x = target, xn
        out.append((e, x[0], x[1]))
        h = min(2 * h, abs(step))
    return out, boundary


def continue_branch(family: SymplecticFamily, seed, eps_range, step: float, tol: float = 1e-9,
                    max_halvings: int = 8) -> Branch:
    """Natural-parameter continuation with Newton correction and step halving."""
    seed = as_point(seed)
    lo, hi = sorted(float(v) for v in eps_range)
    Q, P = family.eval(seed)
    if max(abs(Q - seed.q), abs(P - seed.p)) > tol:
        raise SeedNotFixed(f"seed {tuple(seed)} has residual {max(abs(Q - seed.q), abs(P - seed.p)):.3g}")
    x0 = np.array([seed.q, seed.p])
    try:
        x0 = newton_fixed_point(family, seed.eps, x0, tol)
    except SingularJacobian:
        pass
    up, b_up = _march(family, x0, seed.eps, hi, step, tol, max_halvings)
    down, b_down = _march(family, x0, seed.eps, lo, step, tol, max_halvings)
    rows = down[::-1] + [(seed.eps, x0[0], x0[1])] + up
    boundary = "; ".join(b for b in (b_down, b_up) if b) or None
    return Branch(np.array(rows, dtype=float).reshape(-1, 3), "by_eps", boundary=boundary)


# -- traces and derivative fits ------------------------------------------------


def trace_at(family: SymplecticFamily, pt) -> float:
    return float(np.trace(family.jet(pt, order=1).jacobian()))


def trace_on_branch(family: SymplecticFamily, branch: Branch) -> Branch:
    """Fill ``Tr = Q_q + P_p`` at every sample."""
    branch.trace = np.array([trace_at(family, row[[1, 2, 0]]) for row in branch.samples])
    return branch


def quadratic_fit(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Least-squares ``y ~ a0 + a1 x + a2 x^2``; returns ``(a0, a1, a2)``."""
    V = np.vander(np.asarray(x, dtype=float), 3, increasing=True)
    coef, *_ = np.linalg.lstsq(V, np.asarray(y, dtype=float), rcond=None)
    return coef


def _interp_guess(branch: Branch, eps: float) -> np.ndarray:
    e = branch.eps
    k = np.argsort(np.abs(e - eps))[: min(3, len(e))]
    deg = min(2, len(k) - 1)
    if deg == 0:
        return branch.samples[k[0], 1:].copy()
    return np.array([np.polyval(np.polyfit(e[k], branch.samples[k, c], deg), eps) for c in (1, 2)])


def local_fit(family: SymplecticFamily, branch: Branch, eps0: float, h: float = FIT_HALF_SPACING,
              center=None, tangent=None, tol: float = 1e-9) -> dict:
    """5-point least-squares quadratic fits of q, p and Tr about ``eps0``.

    Fresh fixed points are computed at ``eps0 + k*h``, ``k = -2..2``, seeded
    from the tangent (if given) or by interpolating the branch samples.
    ``center`` supplies the known fixed point at ``eps0`` (e.g. a bifurcation
    point, where Newton is singular).
    """
    rows = []
    for k in range(-2, 3):
        e = eps0 + k * h
        if k == 0 and center is not None:
            x = np.asarray(center, dtype=float)
        else:
            if tangent is not None and center is not None:
                guess = np.asarray(center, dtype=float) + np.asarray(tangent[:2]) / tangent[2] * (k * h)
            else:
                guess = _interp_guess(branch, e)
            x = newton_fixed_point(family, e, guess, tol)
        rows.append((k * h, x[0], x[1], trace_at(family, (x[0], x[1], e))))
    rows = np.array(rows)
    cq = quadratic_fit(rows[:, 0], rows[:, 1])
    cp = quadratic_fit(rows[:, 0], rows[:, 2])
    ct = quadratic_fit(rows[:, 0], rows[:, 3])
    return {
        "eps0": eps0,
        "q_prime": cq[1],
        "p_prime": cp[1],
        "q_second": 2 * cq[2],
        "p_second": 2 * cp[2],
        "tr0": ct[0],
        "tr_prime": ct[1],
        "fit_half_spacing": h,
    }


def find_trace2_crossings(family: SymplecticFamily, branch: Branch, tol: float = 1e-7,
                          tols: Tolerances = Tolerances(), classify_points: bool = True,
                          fit_h: float = FIT_HALF_SPACING) -> list[CrossingReport]:
    """Isolated zeros of ``Tr - 2`` along a by_eps branch, refined and classified."""
    if branch.trace is None:
        trace_on_branch(family, branch)
    d = branch.trace - 2.0
    if np.all(np.abs(d) <= tol):
        branch.flat_trace = True
        return []
    brackets = []
    n = len(d)
    i = 0
    while i < n - 1:
        if abs(d[i]) > tol and abs(d[i + 1]) > tol and d[i] * d[i + 1] < 0:
            brackets.append((i, i + 1))
            i += 1
            continue
        if abs(d[i + 1]) <= tol:
            j = i + 1
            while j < n and abs(d[j]) <= tol:
                j += 1
            if abs(d[i]) > tol and j < n and d[i] * d[j] < 0:
                brackets.append((i, j))
            i = j
            continue
        i += 1

    out = []
    for i, j in brackets:
        a, b = branch.eps[i], branch.eps[j]

        def solve(e):
            return newton_fixed_point(family, e, _interp_guess(branch, e))

        def phi(e):
            x = solve(e)
            return trace_at(family, (x[0], x[1], e)) - 2.0

        try:
            eps_star = brentq(phi, a, b, xtol=1e-14, rtol=8.9e-16, maxiter=200)
        except (ValueError, CrossbifError) as exc:
            log.warning("crossing refinement failed in [%g, %g]: %s", a, b, exc)
            continue
        x = solve(eps_star)
        resid = abs(trace_at(family, (x[0], x[1], eps_star)) - 2.0)
        try:
            fit = local_fit(family, branch, eps_star, fit_h, center=x)
            tr_prime = fit["tr_prime"]
        except CrossbifError:
            tr_prime = (d[j] - d[i]) / (b - a)
        rep = classify(family, (x[0], x[1], eps_star), tols) if classify_points else None
        out.append(CrossingReport(float(eps_star), (float(x[0]), float(x[1]), float(eps_star)),
                                  float(tr_prime), float(resid), rep))
    return out


# -- splitting a cross point into its two fixed-point lines -------------------


def _newton_by_q(adapted: SymplecticFamily, qt: float, guess, tol: float = 1e-12,
                 max_iter: int = 60) -> np.ndarray:
    """Solve for ``(p~, eps~)`` at fixed ``q~`` in adapted coordinates."""
    y = np.array(guess, dtype=float)
    for _ in range(max_iter):
        jet = adapted.jet((qt, y[0], y[1]), order=1)
        Qv, Pv = jet.values
        G = np.array([Qv - qt, Pv - y[0]])
        if np.max(np.abs(G)) <= tol:
            return y
        A = np.array([[jet.Q_p, jet.Q_e], [jet.P_p - 1.0, jet.P_e]])
        if abs(np.linalg.det(A)) <= 1e-15:
            raise SingularJacobian(f"by-q Newton singular at q~={qt}")
        y = y - np.linalg.solve(A, G)
    raise NoConvergence(f"by-q Newton failed at q~={qt}")


def continue_by_q(report: BifurcationReport, half_width: float = 0.05, step: float = 5e-3,
                  fit_h: float = 5e-3) -> Branch:
    """The fixed-point line tangent to the eigenspace, parametrised by ``q~``."""
    adapted = report.adapted_family
    frame = report.frame
    e2 = report.eps_b_second if report.eps_b_second is not None else 0.0

    def sweep(qs):
        rows = []
        prev = []
        for qt in qs:
            if len(prev) >= 2:
                (q1, y1), (q2, y2) = prev[-2], prev[-1]
                guess = y2 + (y2 - y1) * (qt - q2) / (q2 - q1)
            else:
                guess = np.array([0.0, 0.5 * e2 * qt * qt])
            y = _newton_by_q(adapted, qt, guess)
            prev.append((qt, y))
            rows.append((qt, y[0], y[1]))
        return rows

    n = max(1, int(round(half_width / step)))
    grid = np.arange(1, n + 1) * step
    right = sweep(grid)
    left = sweep(-grid)
    adapted_rows = left[::-1] + [(0.0, 0.0, 0.0)] + right
    samples = []
    for qt, pt, et in adapted_rows:
        q, p, e = frame.from_frame(qt, pt, et)
        samples.append((e, q, p))
    branch = Branch(np.array(samples), "by_q", params=np.array([r[0] for r in adapted_rows]),
                    frame=frame)

    fit_rows = [(0.0, 0.0, 0.0)] + [(k * fit_h, *_newton_by_q(adapted, k * fit_h,
                                      [0.0, 0.5 * e2 * (k * fit_h) ** 2])) for k in (-2, -1, 1, 2)]
    fit_rows = np.array(sorted(fit_rows))
    cp = quadratic_fit(fit_rows[:, 0], fit_rows[:, 1])
    ce = quadratic_fit(fit_rows[:, 0], fit_rows[:, 2])
    branch.fits.update(p_B_prime=cp[1], p_B_second=2 * cp[2], eps_B_prime=ce[1],
                       eps_B_second=2 * ce[2], fit_half_spacing=fit_h)
    return branch


def split_cross_branches(family: SymplecticFamily, cross_pt, step: float = 1e-2,
                         half_width: float = 0.1, tols: Tolerances = Tolerances(),
                         fit_h: float = FIT_HALF_SPACING) -> tuple[Branch, Branch]:
    """The two fixed-point lines through a cross-bifurcation point."""
    pt = as_point(cross_pt)
    report = classify(family, pt, tols)
    if not report.kind.is_cross:
        raise NotCross(f"{tuple(pt)} is {report.kind.value}")
    center = np.array([pt.q, pt.p])

    def by_eps(tangent):
        if abs(tangent[2]) < 1e-12:
            raise NotCross("tangent lies in eps = 0; not a branch over eps")
        seed = np.array(pt) + 10 * step * tangent
        guess = center + tangent[:2] / tangent[2] * (seed[2] - pt.eps)
        x = newton_fixed_point(family, seed[2], guess)
        br = continue_branch(family, (x[0], x[1], seed[2]), (pt.eps - half_width, pt.eps + half_width),
                             step)
        trace_on_branch(family, br)
        br.fits.update(local_fit(family, br, pt.eps, fit_h, center=center, tangent=tangent))
        return br

    A = by_eps(report.tangent_a)
    if report.kind == Kind.TRANSCRITICAL:
        B = by_eps(report.tangent_b)
    else:
        B = continue_by_q(report, half_width=min(half_width, 0.05), step=step / 2)
    A.frame = report.frame
    return A, B


def verify_prop3(family: SymplecticFamily, A: Branch, B: Branch) -> float:
    """``|Tr_A'(0) + Tr_B'(0)|`` at a transcritical point."""
    if A.parametrization != "by_eps" or B.parametrization != "by_eps":
        raise PreconditionViolated("both branches must be graphs over eps")
    if "tr_prime" not in A.fits or "tr_prime" not in B.fits:
        raise PreconditionViolated("branches carry no trace-derivative fits")
    return abs(A.fits["tr_prime"] + B.fits["tr_prime"])


def trace_limit_on_B(B: Branch, h: float = 1e-2, adapted: Optional[SymplecticFamily] = None,
                     family: Optional[SymplecticFamily] = None) -> float:
    """``lim (Tr_B - 2) / eps_B(q)`` for ``q -> 0``, symmetrised and Richardson-extrapolated."""
    frame = B.frame
    if adapted is None:
        if family is None:
            raise ValueError("need the family or its adapted form")
        adapted = frame.transform(family)
    e2 = B.fits.get("eps_B_second", 0.0)

    def ratio(qt):
        y = _newton_by_q(adapted, qt, [0.0, 0.5 * e2 * qt * qt])
        eb = y[1]
        if abs(eb) < 1e-12:
            return None
        tr = float(np.trace(adapted.jet((qt, y[0], y[1]), order=1).jacobian()))
        return (tr - 2.0) / eb

    def sym(hh):
        vals = [r for r in (ratio(hh), ratio(-hh)) if r is not None]
        if not vals:
            raise PreconditionViolated("eps_B vanishes on both sides; limit not sampled")
        return sum(vals) / len(vals)

    r1, r2 = sym(h), sym(h / 2)
    return (4.0 * r2 - r1) / 3.0


def verify_prop4(family: SymplecticFamily, A: Branch, B: Branch, h: float = 1e-2) -> tuple[float, float]:
    """``|Tr_A'(0) + Tr_B'(0)/2|`` at a fork-like point; returns ``(residual, Tr_B'(0))``."""
    if B.parametrization != "by_q":
        raise PreconditionViolated("B must be parametrised by q (fork-like cross)")
    if "tr_prime" not in A.fits:
        raise PreconditionViolated("A carries no trace-derivative fit")
    trb = trace_limit_on_B(B, h, family=family)
    B.fits["tr_prime_limit"] = trb
    return abs(A.fits["tr_prime"] + 0.5 * trb), trb


__all__ = [
    "Branch",
    "CrossingReport",
    "continue_branch",
    "continue_by_q",
    "find_trace2_crossings",
    "local_fit",
    "newton_fixed_point",
    "quadratic_fit",
    "split_cross_branches",
    "trace_at",
    "trace_limit_on_B",
    "trace_on_branch",
    "verify_prop3",
    "verify_prop4",
]

