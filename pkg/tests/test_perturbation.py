import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crossbif.errors import PreconditionViolated
from crossbif.frames import unit_eigenspace
from crossbif.poincare import SectionSpec, decoupled_harmonic, find_libration, hill_fundamental, monodromy_at
from crossbif.perturbation import (PerturbationTerm, c_integrals, destruction_criterion, eq60_vector, g_functions,
                                   inhomogeneous_solution, is_cross_preserving, perturbation_report,
                                   persistence_check, rotation_case)

from conftest import DEMO_E0

SECTION = SectionSpec(0.0)
ROTATION = PerturbationTerm.named("rotation")
X2Y = PerturbationTerm.named("x2y")
PX2Y = PerturbationTerm.from_monomials([{"j": 1, "k": 2, "c": 1.0}], name="px2y")
ZERO = PerturbationTerm.from_monomials([], name="zero")


def harmonic(A):
    orbit = find_libration(decoupled_harmonic(), 0.5 * A * A, SECTION)
    return orbit, hill_fundamental(orbit)


@pytest.fixture(scope="module")
def demo_context(demo, demo_scan):
    out = []
    for cr in demo_scan.crossings:
        out.append(monodromy_at(demo, DEMO_E0 + cr.eps_star, SECTION))
    return out


def test_g_rotation():
    g1, g2 = g_functions(ROTATION)
    for y, py in [(0.3, -0.7), (-1.1, 0.4)]:
        assert g1(y, py) == pytest.approx(-y)
        assert g2(y, py) == pytest.approx(-py)


@pytest.mark.parametrize("term", [X2Y, PX2Y, ZERO])
def test_g_vanish_for_preserving_terms(term):
    g1, g2 = g_functions(term)
    assert g1(0.4, 0.9) == 0.0 and g2(0.4, 0.9) == 0.0


def test_g_for_callable_term():
    term = PerturbationTerm(F=lambda x, y, px, py: math.sin(x) * py, F_px=lambda x, y, px, py: 0.0,
                            F_x=lambda x, y, px, py: math.cos(x) * py)
    g1, g2 = g_functions(term)
    assert g1(0.2, 0.5) == 0.0 and g2(0.2, 0.5) == pytest.approx(-0.5)
    assert not is_cross_preserving(term)


def test_cross_preserving_decisions():
    assert is_cross_preserving(X2Y)
    assert is_cross_preserving(PX2Y)
    assert is_cross_preserving(ZERO)
    assert not is_cross_preserving(ROTATION)


def test_cross_preserving_sampled():
    term = PerturbationTerm(F=lambda x, y, px, py: x * x * math.cos(y), F_px=lambda x, y, px, py: 0.0,
                            F_x=lambda x, y, px, py: 2 * x * math.cos(y))
    assert is_cross_preserving(term)


@pytest.mark.parametrize("A", [1.0, 0.5])
def test_harmonic_rotation_closed_form(A):
    orbit, hill = harmonic(A)
    g1, g2 = g_functions(ROTATION)
    c = np.array(c_integrals(hill, g1, g2))
    expected = np.array([0.0, -2 * math.pi * A])
    assert np.linalg.norm(c - expected) <= 1e-6 * np.linalg.norm(expected)
    xi_eta = np.array(inhomogeneous_solution(orbit, g1, g2))
    assert np.linalg.norm(xi_eta - expected) <= 1e-6 * np.linalg.norm(expected)


def test_harmonic_rotation_report():
    A = 1.0
    orbit, hill = harmonic(A)
    rep = rotation_case(orbit, hill)
    assert rep.degenerate_identity and not rep.destroys
    assert rep.consistent
    np.testing.assert_allclose(rep.eq60_vector, [0.0, math.pi * A], atol=1e-9)
    assert rep.eq60_agrees
    np.testing.assert_allclose(rep.criterion, 0.0, atol=1e-8)


def test_zero_term_gives_exact_zeros():
    orbit, hill = harmonic(1.0)
    g1, g2 = g_functions(ZERO)
    assert c_integrals(hill, g1, g2) == (0.0, 0.0)
    assert inhomogeneous_solution(orbit, g1, g2) == (0.0, 0.0)


@pytest.mark.parametrize("term", [X2Y, PX2Y])
def test_preserving_terms_give_exact_zero_c(demo_context, term):
    orbit, hill = demo_context[0]
    rep = perturbation_report(orbit, hill, term)
    assert (rep.c1, rep.c2) == (0.0, 0.0)
    assert not rep.destroys


def test_synthetic_examples():
    M = np.array([[1.0, 1.0], [0.0, 1.0]])
    assert destruction_criterion(M, (0.0, 1.0)).destroys
    np.testing.assert_allclose(destruction_criterion(M, (0.0, 1.0)).criterion, [1.0, 0.0])
    assert not destruction_criterion(M, (1.0, 0.0)).destroys
    rep = destruction_criterion(np.eye(2), (0.0, 1.0))
    assert rep.degenerate_identity and not rep.destroys and rep.shift_destroys is None


def random_symplectic(rng):
    # trace-2 parabolic matrices exercise the eigenspace branch, the rest are generic
    if rng.random() < 0.6:
        t = rng.uniform(-math.pi, math.pi)
        R = np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
        return R @ np.array([[1.0, rng.uniform(0.2, 3) * rng.choice([-1, 1])], [0.0, 1.0]]) @ R.T
    A = rng.normal(size=(2, 2))
    d = np.linalg.det(A)
    if d < 0:
        A[:, 0] *= -1
        d = -d
    return A / math.sqrt(d)


def test_criterion_equivalence_synthetic():
    rng = np.random.default_rng(2024)
    seen = set()
    for k in range(20):
        M = random_symplectic(rng)
        if abs(np.trace(M) - 2) <= 1e-7 and k % 2:
            c = 1.7 * unit_eigenspace(M)  # along the eigenspace: not destroyed
        else:
            c = rng.normal(size=2)
        rep = destruction_criterion(M, c)
        assert not rep.degenerate_identity
        assert rep.criteria_agree
        seen.add(rep.destroys)
    assert seen == {True, False}


@settings(max_examples=50, deadline=None)
@given(st.floats(-math.pi, math.pi), st.floats(0.1, 5.0), st.floats(-3, 3), st.floats(-3, 3))
def test_criterion_equivalence_property(theta, b, c1, c2):
    R = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    M = R @ np.array([[1.0, b], [0.0, 1.0]]) @ R.T
    assert destruction_criterion(M, (c1, c2)).criteria_agree


def test_demo_reports(demo_context):
    outcomes = []
    for orbit, hill in demo_context:
        for term in (ROTATION, X2Y, PX2Y):
            rep = perturbation_report(orbit, hill, term)
            assert rep.consistent, rep.consistency_residual
            assert rep.consistency_residual <= 1e-8 * (1 + np.linalg.norm(rep.monodromy, np.inf)
                                                      * np.linalg.norm(rep.c, np.inf))
            assert not rep.degenerate_identity
            assert rep.criteria_agree
            if term is ROTATION:
                assert rep.eq60_agrees
                outcomes.append(rep.destroys)
    # the first crossing has c in the eigenspace, the second does not
    assert outcomes == [False, True]


@settings(max_examples=10, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2))
def test_c_integrals_linear(a, b):
    orbit, hill = harmonic(0.8)
    F1 = ROTATION
    F2 = PerturbationTerm.from_monomials([{"i": 1, "j": 2, "c": 1.0}, {"k": 1, "l": 1, "c": 0.5}])
    F = F1.combine(a, F2, b)
    c1 = np.array(c_integrals(hill, *g_functions(F1)))
    c2 = np.array(c_integrals(hill, *g_functions(F2)))
    c = np.array(c_integrals(hill, *g_functions(F)))
    assert np.max(np.abs(c - (a * c1 + b * c2))) <= 1e-10


def test_report_json_fields(demo_context):
    orbit, hill = demo_context[1]
    d = rotation_case(orbit, hill).to_dict()
    assert set(d) == {"c1", "c2", "xi_T", "eta_T", "criterion", "destroys", "degenerate_identity",
                      "eq60_vector", "eq60_agrees"}


@pytest.mark.parametrize("delta", [-0.01, 0.01])
def test_persistence_under_x2y(demo, demo_scan, delta):
    cr = demo_scan.crossings[1]
    res = persistence_check(demo, X2Y, DEMO_E0, cr.eps_star, cr.tr_prime, delta, SECTION)
    assert res.persists
    assert res.within(0.5)


def test_persistence_needs_preserving_term(demo, demo_scan):
    cr = demo_scan.crossings[0]
    with pytest.raises(PreconditionViolated):
        persistence_check(demo, ROTATION, DEMO_E0, cr.eps_star, cr.tr_prime, 0.01, SECTION)
