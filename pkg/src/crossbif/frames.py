"""Eigenvalue-one eigenspaces and adapted coordinates at a bifurcating fixed point.

Adapted coordinates are built from three pieces, applied in order:

* a shift of the base point to the origin,
* a rotation by ``theta`` that turns the eigenvalue-one eigenvector into the
  q-axis,
* an eps-dependent translation ``p~ = p - c*eps`` (and optionally the shear
  ``q~ = q - c1*eps``) that kills ``Q_eps`` at the base point.

All three preserve the area form for fixed eps, so the transformed family
is again symplectic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import IdentityJacobian, NoUnitEigenvalue, NotFixedPoint, PreconditionViolated, Rank2Detected
from .family import Point3, SymplecticFamily, as_point, rotation

TRACE_TOL = 1e-7
IDENTITY_TOL = 1e-7
FIXED_POINT_TOL = 1e-9
RANK2_TOL = 1e-7


def unit_eigenspace(J, tol: float = TRACE_TOL, identity_tol: float = IDENTITY_TOL) -> np.ndarray:
    """Unit eigenvector for eigenvalue 1 of a 2x2 symplectic matrix.

    The sign is fixed so that the q-component is nonnegative (p-component
    nonnegative on ties).  Raises :class:`IdentityJacobian` for ``J == I`` and
    :class:`NoUnitEigenvalue` when the trace is not 2.
    """
    J = np.asarray(J, dtype=float)
    if abs(np.linalg.det(J) - 1.0) > 1e-6:
        raise PreconditionViolated(f"matrix is not symplectic: det = {np.linalg.det(J):.12g}")
    A = J - np.eye(2)
    if np.max(np.abs(A)) <= identity_tol:
        raise IdentityJacobian("Jacobian equals the identity; eigenspace is two-dimensional")
    if abs(np.trace(J) - 2.0) > tol:
        raise NoUnitEigenvalue(f"trace {np.trace(J):.12g} differs from 2")
    row = A[0] if np.linalg.norm(A[0]) >= np.linalg.norm(A[1]) else A[1]
    v = np.array([row[1], -row[0]])
    v /= np.linalg.norm(v)
    if v[0] < 0 or (v[0] == 0 and v[1] < 0):
        v = -v
    return v


@dataclass(frozen=True)
class AdaptedFrame:
    base_point: Point3
    theta: float
    c: float = 0.0
    c1: float = 0.0

    @property
    def R(self) -> np.ndarray:
        return rotation(self.theta)

    def to_frame(self, q, p, eps):
        """Original coordinates -> adapted coordinates (works on jets too)."""
        q0, p0, e0 = self.base_point
        ct, st = math.cos(self.theta), math.sin(self.theta)
        de = eps - e0
        dq, dp = q - q0, p - p0
        return ct * dq - st * dp - self.c1 * de, st * dq + ct * dp - self.c * de, de

    def from_frame(self, qt, pt, et):
        q0, p0, e0 = self.base_point
        ct, st = math.cos(self.theta), math.sin(self.theta)
        a, b = qt + self.c1 * et, pt + self.c * et
        return q0 + ct * a + st * b, p0 - st * a + ct * b, e0 + et

    def transform(self, family: SymplecticFamily) -> SymplecticFamily:
        """The family written in this frame; the base point becomes the origin."""
        ev = family.evaluator
        q0, p0, e0 = self.base_point
        ct, st = math.cos(self.theta), math.sin(self.theta)
        c, c1 = self.c, self.c1

        def adapted(qt, pt, et, *rest):
            a, b = qt + c1 * et, pt + c * et
            Q, P = ev(q0 + ct * a + st * b, p0 - st * a + ct * b, e0 + et, *rest)
            dQ, dP = Q - q0, P - p0
            return ct * dQ - st * dP - c1 * et, st * dQ + ct * dP - c * et

        return SymplecticFamily(adapted, family.analytic, family.two_param,
                                f"{family.name}|adapted", family.det_tol, family.meta)

    def tangent_to_original(self, v) -> np.ndarray:
        """Map a tangent vector (dq~, dp~, deps) back to original coordinates."""
        v = np.asarray(v, dtype=float)
        a, b = v[0] + self.c1 * v[2], v[1] + self.c * v[2]
        ct, st = math.cos(self.theta), math.sin(self.theta)
        return np.array([ct * a + st * b, -st * a + ct * b, v[2]])

    def tangent_to_frame(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        ct, st = math.cos(self.theta), math.sin(self.theta)
        return np.array([ct * v[0] - st * v[1] - self.c1 * v[2],
                         st * v[0] + ct * v[1] - self.c * v[2], v[2]])

    def eigen_direction(self) -> np.ndarray:
        """Eigenspace direction (q-axis of the frame) in original (q, p) coordinates."""
        return self.tangent_to_original([1.0, 0.0, 0.0])[:2]

    def with_shear(self, c1: float) -> "AdaptedFrame":
        return apply_shear(self, c1)


def apply_shear(frame: AdaptedFrame, c1: float) -> AdaptedFrame:
    """Set the eps-dependent shear ``q~ = q - c1*eps``; adaptedness is unaffected."""
    return replace(frame, c1=float(c1))


def fixed_point_residual(family: SymplecticFamily, pt, delta=None) -> float:
    pt = as_point(pt)
    Q, P = family.eval(pt, delta)
    return max(abs(Q - pt.q), abs(P - pt.p))


def to_adapted(family: SymplecticFamily, fixed_pt, trace_tol: float = TRACE_TOL,
               identity_tol: float = IDENTITY_TOL, fixed_tol: float = FIXED_POINT_TOL,
               rank2_tol: float = RANK2_TOL, jet=None):
    """Adapted frame at a fixed point with a unit eigenvalue.

    Returns ``(frame, adapted_family)``.  Raises :class:`Rank2Detected` when
    ``P_eps`` survives the translation, i.e. the fixed-point set is a single
    smooth curve (saddle-node candidate) rather than a rank-1 bifurcation.
    """
    pt = as_point(fixed_pt)
    jet = jet if jet is not None else family.jet(pt, order=1)
    Qv, Pv = jet.values
    if max(abs(Qv - pt.q), abs(Pv - pt.p)) > fixed_tol:
        raise NotFixedPoint(f"residual {max(abs(Qv - pt.q), abs(Pv - pt.p)):.3g} at {tuple(pt)}")
    v = unit_eigenspace(jet.jacobian(), trace_tol, identity_tol)
    theta = -math.atan2(v[1], v[0])
    R = rotation(theta)
    Jr = R @ jet.jacobian() @ R.T
    Ge = R @ jet.eps_vector()
    if abs(Jr[0, 1]) < 1e-12:
        raise IdentityJacobian("rotated Jacobian has vanishing Q_p")
    c = -Ge[0] / Jr[0, 1]
    p_eps = Jr[1, 1] * c + Ge[1] - c
    frame = AdaptedFrame(pt, theta, c, 0.0)
    if abs(p_eps) > rank2_tol:
        err = Rank2Detected(f"P_eps = {p_eps:.6g} after translation: rank-2 (saddle-node candidate)")
        err.frame = frame
        err.p_eps = p_eps
        raise err
    return frame, frame.transform(family)


def normalize_at(family: SymplecticFamily, pt, jet=None) -> SymplecticFamily:
    """Left-compose with a constant symplectic matrix so that ``J(pt) = [[1, 1], [0, 1]]``.

    Gives points satisfying the hypothesis of the determinant derivative
    formula anywhere in a family, not only at bifurcations.
    """
    jet = jet if jet is not None else family.jet(pt, order=1)
    J = jet.jacobian()
    L = np.array([[1.0, 1.0], [0.0, 1.0]]) @ np.linalg.inv(J)
    return family.compose_linear(L, name=f"{family.name}|normalized")


def angle_between(u, v) -> float:
    """Unsigned angle between the lines spanned by ``u`` and ``v`` (in [0, pi/2])."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    cosang = abs(float(u @ v)) / (np.linalg.norm(u) * np.linalg.norm(v))
    return math.acos(min(1.0, cosang))


__all__ = [
    "AdaptedFrame",
    "apply_shear",
    "angle_between",
    "fixed_point_residual",
    "normalize_at",
    "to_adapted",
    "unit_eigenspace",
]
