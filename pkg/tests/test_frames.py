import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crossbif.classifier import Kind, Tolerances, classify
from crossbif.errors import IdentityJacobian, NoUnitEigenvalue, NotFixedPoint, PreconditionViolated, Rank2Detected
from crossbif.family import builtin_family, g_poly, rotation, shear_family
from crossbif.frames import AdaptedFrame, angle_between, apply_shear, to_adapted, unit_eigenspace
from crossbif.polynomial import Polynomial

ORIGIN = (0.0, 0.0, 0.0)
SHEAR = np.array([[1.0, 1.0], [0.0, 1.0]])
ANGLES = [0.0, math.radians(30), math.radians(77)]
CROSS_FAMILIES = ["transcritical", "forklike"]


def assert_adapted(adapted, pt=ORIGIN):
    jet = adapted.jet(pt, order=1)
    assert abs(jet.Q_q - 1) <= 1e-8
    assert abs(jet.P_q) <= 1e-8
    assert abs(jet.P_p - 1) <= 1e-8
    assert abs(jet.Q_e) <= 1e-8
    assert abs(jet.P_e) <= 1e-8
    assert abs(jet.Q_p) >= 1e-6


def test_eigenspace_of_unipotent_shear():
    np.testing.assert_allclose(unit_eigenspace(SHEAR), [1.0, 0.0], atol=1e-15)


def test_eigenspace_of_identity_is_excluded():
    with pytest.raises(IdentityJacobian):
        unit_eigenspace(np.eye(2))


def test_eigenspace_rotates_with_conjugation():
    t = math.radians(30)
    J = rotation(t) @ SHEAR @ rotation(-t)
    np.testing.assert_allclose(unit_eigenspace(J), [math.cos(t), math.sin(t)], atol=1e-14)


def test_eigenspace_without_unit_eigenvalue():
    J = np.array([[2.0, 0.0], [0.0, 0.5]])
    with pytest.raises(NoUnitEigenvalue):
        unit_eigenspace(J)


def test_eigenspace_rejects_non_symplectic():
    with pytest.raises(PreconditionViolated):
        unit_eigenspace(np.array([[1.0, 1.0], [0.0, 2.0]]))


@settings(max_examples=100, deadline=None)
@given(st.floats(-math.pi, math.pi), st.floats(-5, 5).filter(lambda b: abs(b) > 1e-3))
def test_eigenspace_is_eigenvector(theta, b):
    J = rotation(theta) @ np.array([[1.0, b], [0.0, 1.0]]) @ rotation(-theta)
    v = unit_eigenspace(J)
    assert np.linalg.norm(J @ v - v) <= 1e-8
    assert abs(np.linalg.norm(v) - 1) <= 1e-14
    assert v[0] > 0 or (v[0] == 0 and v[1] >= 0)


def test_transcritical_is_already_adapted():
    frame, adapted = to_adapted(builtin_family("transcritical"), ORIGIN)
    assert frame.theta == 0.0
    assert frame.c == 0.0
    assert_adapted(adapted)


def test_rotated_transcritical_frame_undoes_rotation():
    t = math.radians(30)
    frame, adapted = to_adapted(builtin_family("transcritical", t), ORIGIN)
    # eigenvector sign is a convention: theta is -30 degrees modulo pi
    assert abs(math.remainder(frame.theta + t, math.pi)) <= 1e-12
    assert abs(frame.c) <= 1e-12
    assert_adapted(adapted)


def test_translation_constant_from_eps_drift():
    fam = shear_family(g_poly((1, 1, 1.0), (2, 0, -1.0)),
                       drift_q=Polynomial.from_monomials(2, [((0, 1), 1.0)]))
    frame, adapted = to_adapted(fam, ORIGIN)
    assert frame.c == pytest.approx(-1.0, abs=1e-14)
    assert_adapted(adapted)


@pytest.mark.parametrize("name", CROSS_FAMILIES + ["definite"])
@pytest.mark.parametrize("theta", ANGLES)
def test_adapted_frame_invariant(name, theta):
    _, adapted = to_adapted(builtin_family(name, theta), ORIGIN)
    assert_adapted(adapted)


@pytest.mark.parametrize("theta", ANGLES)
def test_adapted_family_stays_symplectic(theta):
    _, adapted = to_adapted(builtin_family("transcritical", theta), ORIGIN)
    rng = np.random.default_rng(3)
    for pt in rng.uniform(-0.3, 0.3, (20, 3)):
        J = adapted.jet(pt, order=1).jacobian()
        assert abs(np.linalg.det(J) - 1) <= 1e-12


def test_rank2_detected_for_saddle_node():
    with pytest.raises(Rank2Detected) as info:
        to_adapted(builtin_family("saddle_node"), ORIGIN)
    assert info.value.p_eps == pytest.approx(1.0)


def test_not_a_fixed_point():
    with pytest.raises(NotFixedPoint):
        to_adapted(builtin_family("transcritical"), (1.0, 0.0, 0.0))


finite = st.floats(-2, 2)


@settings(max_examples=200, deadline=None)
@given(finite, finite, finite, finite, finite, finite, st.floats(-math.pi, math.pi), finite, finite)
def test_frame_round_trip(q0, p0, e0, q, p, e, theta, c, c1):
    frame = AdaptedFrame((q0, p0, e0), theta, c, c1)
    back = frame.from_frame(*frame.to_frame(q, p, e))
    assert np.max(np.abs(np.array(back) - [q, p, e])) <= 1e-12
    v = np.array([q, p, e])
    np.testing.assert_allclose(frame.tangent_to_original(frame.tangent_to_frame(v)), v, atol=1e-12)


def test_zero_shear_is_identity():
    frame, _ = to_adapted(builtin_family("transcritical", 0.4), ORIGIN)
    assert apply_shear(frame, 0.0) == frame


@pytest.mark.parametrize("c1", [-1.0, -0.3, 0.5, 2.0])
def test_shear_keeps_frame_adapted(c1):
    frame, _ = to_adapted(builtin_family("forklike", 0.3), ORIGIN)
    assert_adapted(frame.with_shear(c1).transform(builtin_family("forklike", 0.3)))


@pytest.mark.parametrize("c1", [-1.0, 0.25, 3.0])
def test_shear_preserves_hessian_sign(c1):
    fam = builtin_family("forklike")
    frame, _ = to_adapted(fam, ORIGIN)
    jet = frame.with_shear(c1).transform(fam).jet(ORIGIN, order=2)
    H = np.array([[jet.P_qq, jet.P_qe], [jet.P_qe, jet.P_ee]])
    assert np.linalg.det(H) < 0


def test_shear_symmetrises_transcritical_tangents():
    from crossbif.continuation import split_cross_branches

    fam = builtin_family("transcritical")
    A, B = split_cross_branches(fam, ORIGIN)
    frame, _ = to_adapted(fam, ORIGIN)
    # q~ = q - c1*eps shifts every slope dq/deps by -c1
    c1 = (A.fits["q_prime"] + B.fits["q_prime"]) / 2
    sheared = frame.with_shear(c1)
    ta = sheared.tangent_to_frame(A.tangent())
    tb = sheared.tangent_to_frame(B.tangent())
    assert abs(ta[0] / ta[2] + tb[0] / tb[2]) <= 1e-8


@pytest.mark.parametrize("name", ["transcritical", "forklike", "definite"])
@pytest.mark.parametrize("c1", [0.0, 0.7, -1.3])
def test_hessian_equivalence_across_frames(name, c1):
    # a rotation by pi flips the eigenvector sign; together with a shear this
    # gives a second valid adapted frame for the same point
    fam = builtin_family(name, 0.5)
    frame, _ = to_adapted(fam, ORIGIN)
    other = AdaptedFrame(frame.base_point, frame.theta + math.pi, -frame.c, c1)
    hs = []
    for fr in (frame, other):
        adapted = fr.transform(fam)
        assert_adapted(adapted)
        jet = adapted.jet(ORIGIN, order=2)
        hs.append(np.array([[jet.P_qq, jet.P_qe], [jet.P_qe, jet.P_ee]]))
    d0, d1 = (np.linalg.det(h) for h in hs)
    assert np.sign(d0) == np.sign(d1)
    assert np.sign(np.linalg.eigvalsh(hs[0])).tolist() in (
        np.sign(np.linalg.eigvalsh(hs[1])).tolist(), (-np.sign(np.linalg.eigvalsh(hs[1])))[::-1].tolist())


@pytest.mark.parametrize("name,kind", [("transcritical", Kind.TRANSCRITICAL), ("forklike", Kind.FORK_LIKE),
                                       ("definite", Kind.DEFINITE), ("saddle_node", Kind.RANK2_SADDLE_NODE)])
@pytest.mark.parametrize("theta", ANGLES)
def test_classification_invariant_under_rotation(name, kind, theta):
    assert classify(builtin_family(name, theta), ORIGIN).kind == kind


def test_angle_between_lines():
    assert angle_between([1, 0], [-1, 0]) == 0.0
    assert angle_between([1, 0], [0, 2]) == pytest.approx(math.pi / 2)
