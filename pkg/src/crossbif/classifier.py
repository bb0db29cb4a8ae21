"""Classification of fixed points with a unit eigenvalue in symplectic families."""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import IdentityJacobian, NoUnitEigenvalue, PreconditionViolated, Rank2Detected
from .family import DerivativeJet, SymplecticFamily, as_point
from .frames import AdaptedFrame, to_adapted


class Kind(str, enum.Enum):
    NOT_FIXED_POINT = "NotFixedPoint"
    NO_UNIT_EIGENVALUE = "NoUnitEigenvalue"
    IDENTITY_JACOBIAN = "IdentityJacobian"
    RANK2_SADDLE_NODE = "Rank2SaddleNodeCandidate"
    DEFINITE = "Rank1Definite"
    TRANSCRITICAL = "Rank1CrossTranscritical"
    FORK_LIKE = "Rank1CrossForkLike"
    CROSS_DEGENERATE = "Rank1CrossDegenerate"
    DEGENERATE_HESSIAN = "Rank1DegenerateHessian"

    @property
    def is_cross(self) -> bool:
        return self in (Kind.TRANSCRITICAL, Kind.FORK_LIKE, Kind.CROSS_DEGENERATE)


@dataclass(frozen=True)
class Tolerances:
    fixed_point: float = 1e-9
    trace: float = 1e-7
    identity: float = 1e-7
    rank2: float = 1e-7
    hessian: float = 1e-8  # relative: |det H| <= hessian * (1 + |H|^2)
    p_qq: float = 1e-7
    fork: float = 1e-7
    p_qe: float = 1e-7
    destruction: float = 1e-7

    def updated(self, **overrides) -> "Tolerances":
        unknown = set(overrides) - set(self.__dataclass_fields__)
        if unknown:
            raise KeyError(f"unknown tolerance(s): {sorted(unknown)}")
        return Tolerances(**{**asdict(self), **{k: float(v) for k, v in overrides.items()}})


@dataclass
class BifurcationReport:
    kind: Kind
    point: tuple
    frame: Optional[AdaptedFrame] = None
    hessian: Optional[np.ndarray] = None
    hessian_det: Optional[float] = None
    hessian_eigenvalues: Optional[np.ndarray] = None
    p_qq: Optional[float] = None
    eps_b_second: Optional[float] = None
    fork_discriminant: Optional[float] = None
    eigen_direction: Optional[np.ndarray] = None
    tangent_a: Optional[np.ndarray] = None
    tangent_b: Optional[np.ndarray] = None
    trace: Optional[float] = None
    p_eps: Optional[float] = None
    tolerances: Tolerances = field(default_factory=Tolerances)
    adapted_jet: Optional[DerivativeJet] = field(default=None, repr=False)
    adapted_family: Optional[SymplecticFamily] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        def arr(x):
            return None if x is None else np.asarray(x, dtype=float).tolist()

        def num(x):
            return None if x is None else float(x)

        return {
            "kind": self.kind.value,
            "hessian": arr(self.hessian),
            "hessian_det": num(self.hessian_det),
            "p_qq": num(self.p_qq),
            "eps_b_second": num(self.eps_b_second),
            "theta": None if self.frame is None else self.frame.theta,
            "c": None if self.frame is None else self.frame.c,
            "c1": None if self.frame is None else self.frame.c1,
            "eigen_direction": arr(self.eigen_direction),
            "tolerances": asdict(self.tolerances),
        }


@dataclass
class DestructionCheckReport:
    delta_vector: np.ndarray
    adapted_delta_vector: np.ndarray
    in_eigenspace: bool
    hessian_delta_restricted: Optional[np.ndarray]
    restricted_det: Optional[float]
    destroys: bool
    slice_report: BifurcationReport = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "delta_vector": self.delta_vector.tolist(),
            "adapted_delta_vector": self.adapted_delta_vector.tolist(),
            "in_eigenspace": self.in_eigenspace,
            "hessian_delta_restricted": None if self.hessian_delta_restricted is None
            else self.hessian_delta_restricted.tolist(),
            "destroys": self.destroys,
        }


def hessian_null_directions(H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """The two null lines of an indefinite symmetric 2x2 form, as unit vectors."""
    w, V = np.linalg.eigh(H)
    neg, pos = w[0], w[1]
    if not (neg < 0 < pos):
        raise ValueError("form is not indefinite")
    d1 = math.sqrt(pos) * V[:, 0] + math.sqrt(-neg) * V[:, 1]
    d2 = math.sqrt(pos) * V[:, 0] - math.sqrt(-neg) * V[:, 1]
    return d1 / np.linalg.norm(d1), d2 / np.linalg.norm(d2)


def _orient(v: np.ndarray) -> np.ndarray:
    v = v / np.linalg.norm(v) + 0.0
    lead = v[2] if abs(v[2]) > 1e-14 else v[0]
    return (-v if lead < 0 else v) + 0.0


def fork_eps_second(jet: DerivativeJet, tols: Tolerances = Tolerances()) -> float:
    """Second derivative of eps along the line tangent to the eigenspace.

    Needs an adapted jet of order 3 at a non-transcritical regular cross.
    """
    if abs(jet.P_qq) > tols.p_qq:
        raise PreconditionViolated(f"P_qq = {jet.P_qq:.3g} is nonzero: transcritical, not fork-like")
    if abs(jet.P_qe) <= tols.p_qe:
        raise PreconditionViolated("P_q,eps vanishes: cross is not regular")
    return (3.0 * jet.Q_qq * jet.P_qp - jet.Q_p * jet.P_qqq) / (3.0 * jet.Q_p * jet.P_qe)


def classify(family: SymplecticFamily, pt, tols: Tolerances = Tolerances()) -> BifurcationReport:
    """Decide the bifurcation type of ``pt``; degenerate outcomes are kinds, not errors."""
    pt = as_point(pt)
    jet1 = family.jet(pt, order=1)
    Qv, Pv = jet1.values
    report = BifurcationReport(Kind.NOT_FIXED_POINT, tuple(pt), tolerances=tols)
    report.trace = float(np.trace(jet1.jacobian()))
    if max(abs(Qv - pt.q), abs(Pv - pt.p)) > tols.fixed_point:
        return report
    try:
        frame, adapted = to_adapted(family, pt, tols.trace, tols.identity, tols.fixed_point,
                                    tols.rank2, jet=jet1)
    except IdentityJacobian:
        report.kind = Kind.IDENTITY_JACOBIAN
        return report
    except NoUnitEigenvalue:
        report.kind = Kind.NO_UNIT_EIGENVALUE
        return report
    except Rank2Detected as exc:
        report.kind = Kind.RANK2_SADDLE_NODE
        report.frame = exc.frame
        report.p_eps = exc.p_eps
        report.eigen_direction = exc.frame.eigen_direction()
        return report

    report.frame = frame
    report.adapted_family = adapted
    report.eigen_direction = frame.eigen_direction()
    jet = adapted.jet((0.0, 0.0, 0.0), order=3)
    report.adapted_jet = jet
    H = np.array([[jet.P_qq, jet.P_qe], [jet.P_qe, jet.P_ee]])
    det = float(np.linalg.det(H))
    report.hessian = H
    report.hessian_det = det
    report.hessian_eigenvalues = np.linalg.eigvalsh(H)
    report.p_qq = jet.P_qq
    if abs(det) <= tols.hessian * (1.0 + float(np.sum(H * H))):
        report.kind = Kind.DEGENERATE_HESSIAN
        return report
    if det > 0:
        report.kind = Kind.DEFINITE
        return report

    d1, d2 = hessian_null_directions(H)
    tangents = [_orient(frame.tangent_to_original([d[0], 0.0, d[1]])) for d in (d1, d2)]
    # B is the line closer to the eps = 0 plane (tangent to the eigenspace when not transcritical)
    tangents.sort(key=lambda t: abs(frame.tangent_to_frame(t)[2]) / np.linalg.norm(t), reverse=True)
    report.tangent_a, report.tangent_b = tangents
    if abs(jet.P_qq) > tols.p_qq:
        report.kind = Kind.TRANSCRITICAL
        return report
    disc = 3.0 * jet.Q_qq * jet.P_qp - jet.Q_p * jet.P_qqq
    report.fork_discriminant = disc
    if abs(disc) > tols.fork:
        report.kind = Kind.FORK_LIKE
        report.eps_b_second = fork_eps_second(jet, tols)
    else:
        report.kind = Kind.CROSS_DEGENERATE
    return report


def destruction_check_map(family: SymplecticFamily, pt, tol: Optional[float] = None,
                          tols: Tolerances = Tolerances()) -> DestructionCheckReport:
    """Does the second parameter remove the cross-bifurcation at ``pt``?

    Sufficient criterion: the delta-derivative of the map does not lie in the
    eigenspace; in adapted coordinates this is ``P_delta != 0``.
    """
    if not family.two_param:
        raise PreconditionViolated("destruction check needs a two-parameter family")
    tol = tols.destruction if tol is None else tol
    report = classify(family.slice(0.0), pt, tols)
    if not report.kind.is_cross:
        raise PreconditionViolated(f"delta = 0 slice is {report.kind.value}, not a cross-bifurcation")
    jet = family.jet(pt, order=1, delta=0.0, with_delta=True)
    vec = np.array([jet.Q_d, jet.P_d])
    adapted_vec = report.frame.R @ vec
    destroys = abs(adapted_vec[1]) > tol
    hess = None
    rdet = None
    if adapted_vec[1] != 0.0:
        hess = -report.hessian / adapted_vec[1]
        rdet = float(np.linalg.det(hess))
    return DestructionCheckReport(vec, adapted_vec, not destroys, hess, rdet, destroys, report)
