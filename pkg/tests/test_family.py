import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crossbif.errors import DomainEscape, NumericalBreakdown, PreconditionViolated
from crossbif.family import (
    BUILTIN_G,
    SymplecticFamily,
    as_point,
    builtin_family,
    check_det_derivative_formula,
    check_symplectic,
    g_poly,
    shear_family,
)
from crossbif.frames import normalize_at
from crossbif.polynomial import Polynomial

TRANS = builtin_family("transcritical")
coord = st.floats(-0.5, 0.5)


def test_eval_examples():
    assert TRANS.eval((0, 0, 0)) == (0.0, 0.0)
    assert TRANS.eval((1, 0, 0)) == (0.0, -1.0)
    zero = shear_family(Polynomial.zero(2))
    assert zero.eval((0.3, -0.2, 0.7)) == pytest.approx((0.1, -0.2))


def test_point_must_be_finite():
    with pytest.raises(ValueError):
        as_point((0.0, math.nan, 0.0))


def test_jet_examples():
    j = TRANS.jet((0, 0, 0))
    assert (j.Q_p, j.P_qq, j.P_qe, j.P_ee) == (1.0, -2.0, 1.0, 0.0)
    f = builtin_family("forklike").jet((0, 0, 0))
    assert (f.P_qq, f.P_qqq, f.P_qe) == (0.0, -6.0, 1.0)
    ident = shear_family(Polynomial.zero(2)).jet((0.2, 0.0, 0.1), order=1)
    np.testing.assert_array_equal(ident.jacobian(), [[1.0, 1.0], [0.0, 1.0]])


def test_mixed_partials_share_storage():
    j = TRANS.jet((0.1, 0.2, 0.3))
    assert j.partial("P", "qe") == j.partial("P", "eq")


def test_jet_order_validated():
    with pytest.raises(ValueError):
        TRANS.jet((0, 0, 0), order=4)


@pytest.mark.parametrize("name", sorted(BUILTIN_G))
@pytest.mark.parametrize("theta", [0.0, math.radians(30)])
def test_symplectic_random_points(name, theta):
    fam = builtin_family(name, theta)
    rng = np.random.default_rng(7)
    tol = 1e-12
    for pt in rng.uniform(-0.5, 0.5, size=(100, 3)):
        res, ok = check_symplectic(fam, pt, tol=tol)
        assert ok, res


@pytest.mark.parametrize("name", sorted(BUILTIN_G))
def test_analytic_jet_matches_finite_differences(name):
    fam = builtin_family(name, math.radians(30))
    rng = np.random.default_rng(11)
    for pt in rng.uniform(-0.5, 0.5, size=(20, 3)):
        exact = fam.jet(pt, order=3).as_table()
        fd = fam.jet(pt, order=3, method="fd").as_table()
        for k, v in exact.items():
            assert abs(fd[k] - v) <= max(1e-5 * abs(v), 1e-7), (k, v, fd[k])


def test_det_formula_examples():
    for u in ("e", "q", "p"):
        assert check_det_derivative_formula(TRANS, (0, 0, 0), u) == pytest.approx(0.0, abs=1e-15)
    zero = shear_family(Polynomial.zero(2))
    for u in ("q", "p", "eps"):
        assert check_det_derivative_formula(zero, (0.1, 0.2, 0.3), u) == 0.0


def test_det_formula_precondition():
    with pytest.raises(PreconditionViolated):
        check_det_derivative_formula(builtin_family("transcritical", 0.5), (0.3, 0.1, 0.2), "q")


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(sorted(BUILTIN_G)), coord, coord, coord, st.floats(0, 2 * math.pi))
def test_det_formula_holds_after_normalisation(name, q, p, e, theta):
    fam = normalize_at(builtin_family(name, theta), (q, p, e))
    for u in ("q", "p", "e"):
        assert check_det_derivative_formula(fam, (q, p, e), u) <= 1e-10


def test_two_parameter_family_and_slice():
    g = Polynomial(3, {(1, 1, 0): 1.0, (2, 0, 0): -1.0, (1, 0, 1): 2.0})
    fam = shear_family(g)
    assert fam.two_param
    j = fam.jet((0, 0, 0), order=1, with_delta=True)
    assert j.Q_d == 0.0 and j.P_d == 0.0
    j = fam.jet((0.5, 0, 0), order=1, with_delta=True)
    assert j.P_d == pytest.approx(1.0)
    assert fam.slice(0.0).eval((0.5, 0.0, 0.0)) == fam.eval((0.5, 0.0, 0.0), 0.0)
    with pytest.raises(ValueError):
        TRANS.jet((0, 0, 0), with_delta=True)


def test_drifts_must_not_depend_on_q():
    with pytest.raises(ValueError):
        shear_family(g_poly((1, 1, 1.0)), drift_q=g_poly((1, 0, 1.0)))


def test_domain_escape_wraps_evaluator_errors():
    fam = SymplecticFamily(lambda q, p, e: (math.sqrt(q), p), analytic=False)
    with pytest.raises(DomainEscape):
        fam.eval((-1.0, 0.0, 0.0))
    with pytest.raises(NumericalBreakdown):
        fam.jet((0.0, 0.0, 0.0), order=1)


def test_compose_linear_left_and_right():
    L = np.array([[2.0, 0.0], [0.0, 0.5]])
    fam = TRANS.compose_linear(L, np.linalg.inv(L))
    assert check_symplectic(fam, (0.2, 0.1, 0.3))[1]
    Q, P = fam.eval((0.2, 0.1, 0.3))
    Q0, P0 = TRANS.eval((0.1, 0.2, 0.3))
    assert (Q, P) == pytest.approx((2 * Q0, 0.5 * P0))
