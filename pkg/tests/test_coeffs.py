import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nullwave.coeffs import (CoeffTensor, RadialGradient, decompose_null, eval_quadratic_radial, is_null,
                             lnull_bound_ratio, nullform_expansion_check, verify_null_on_cone)
from nullwave.errors import NotNull

PAIRS = [(a, b) for a in range(4) for b in range(a + 1, 4)]


def null_combo(c0, cs):
    t = c0 * CoeffTensor.q0()
    for (a, b), c in zip(PAIRS, cs):
        t = t + c * CoeffTensor.qab(a, b)
    return t


def cone_oracle(t, n=100, seed=1):
    # independent sampler: random unit w, both time orientations
    rng = np.random.default_rng(seed)
    w = rng.normal(size=(n, 3))
    w /= np.linalg.norm(w, axis=1)[:, None]
    worst = 0.0
    for x0 in (1.0, -1.0):
        xi = np.hstack([np.full((n, 1), x0), w])
        worst = max(worst, np.max(np.abs(np.einsum("ni,ij,nj->n", xi, t.entries, xi))))
    return worst


def test_q0_is_null():
    d = decompose_null(CoeffTensor.q0())
    assert d.is_null and d.q0_coefficient == 1.0 and d.residual_norm == 0.0


def test_e00_not_null():
    d = decompose_null(CoeffTensor.e00())
    assert not d.is_null
    # best Q0 fit is 1/4, leaving diag(3/4, 1/4, 1/4, 1/4)
    assert d.residual_norm == pytest.approx(np.sqrt(0.75**2 + 3 * 0.25**2), abs=1e-15)


def test_two_q0_plus_q01():
    t = CoeffTensor.parse("2*q0 + qab:01")
    d = decompose_null(t)
    assert d.is_null and d.q0_coefficient == pytest.approx(2.0)
    assert d.qab_coefficients[0, 1] == pytest.approx(1.0)
    assert cone_oracle(t) < 1e-12


def test_cone_values():
    assert verify_null_on_cone(CoeffTensor.q0(), 200) <= 1e-15
    assert verify_null_on_cone(CoeffTensor.e00(), 200) == 1.0
    rng = np.random.default_rng(3)
    m = rng.normal(size=(4, 4))
    assert verify_null_on_cone(CoeffTensor(m - m.T), 200) <= 1e-15


def test_parse_forms():
    assert CoeffTensor.parse("q0") == CoeffTensor.q0()
    assert CoeffTensor.parse("-2*q0") == -2 * CoeffTensor.q0()
    assert CoeffTensor.parse(CoeffTensor.e00().to_text()) == CoeffTensor.e00()
    with pytest.raises(ValueError):
        CoeffTensor.parse("1 2 3")
    with pytest.raises(ValueError):
        CoeffTensor.parse("qab:00")


def test_eval_quadratic_examples():
    q0 = CoeffTensor.q0()
    assert eval_quadratic_radial(q0, (1, 0, 0), (1, 0, 0)) == 1
    assert eval_quadratic_radial(q0, (0.7, 0.7, 0), (0.7, 0.7, 0)) == 0
    assert eval_quadratic_radial(CoeffTensor.e00(), (1, 2, 0), (3, 5, 0)) == 3
    with pytest.raises(ValueError):
        eval_quadratic_radial(CoeffTensor.e00(), (1, 2, 1), (3, 5, 0))


def test_null_gradient_kills_q0():
    # A = Q0 at a point with phi_t = phi_r
    assert eval_quadratic_radial(CoeffTensor.q0(), RadialGradient(0.3, 0.3), RadialGradient(0.3, 0.3)) == 0.0


def test_expansion_requires_null():
    with pytest.raises(NotNull):
        nullform_expansion_check(None, None, CoeffTensor.e00())


def test_lnull_bound_zero_when_no_background():
    r = np.linspace(0.1, 5, 20)
    assert lnull_bound_ratio(CoeffTensor.q0(), 0 * r, 0 * r, r, r, r, r) == 0.0


coef = st.floats(-5, 5, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(c0=coef, cs=st.lists(coef, min_size=6, max_size=6))
def test_null_combo_recovered(c0, cs):
    t = null_combo(c0, cs)
    d = decompose_null(t)
    assert d.is_null
    assert abs(d.q0_coefficient - c0) <= 1e-12
    assert np.max(np.abs(d.reconstruct() - t.entries)) <= 1e-12
    for (a, b), c in zip(PAIRS, cs):
        assert abs(d.qab_coefficients[a, b] - c) <= 1e-12
    assert verify_null_on_cone(t) <= 1e-12


@settings(max_examples=200, deadline=None)
@given(st.lists(coef, min_size=16, max_size=16))
def test_decomposition_agrees_with_cone(vals):
    t = CoeffTensor(np.array(vals).reshape(4, 4))
    d = decompose_null(t)
    cone = cone_oracle(t, 400)
    if d.residual_norm > 1e-6:
        assert not d.is_null and cone > 0
    if d.is_null:
        assert cone < 1e-9
    assert np.max(np.abs(d.reconstruct() - t.entries)) <= 1e-12


grad = st.tuples(coef, coef)


@settings(max_examples=100, deadline=None)
@given(vals=st.lists(coef, min_size=16, max_size=16), g1=grad, g2=grad, g3=grad, a=coef, b=coef)
def test_eval_bilinear(vals, g1, g2, g3, a, b):
    t = CoeffTensor(np.array(vals).reshape(4, 4))
    comb = (a * g1[0] + b * g2[0], a * g1[1] + b * g2[1], 0.0)
    lhs = eval_quadratic_radial(t, comb, (g3[0], g3[1], 0.0))
    rhs = a * eval_quadratic_radial(t, (g1[0], g1[1], 0.0), (g3[0], g3[1], 0.0)) + b * eval_quadratic_radial(
        t, (g2[0], g2[1], 0.0), (g3[0], g3[1], 0.0))
    assert lhs == pytest.approx(rhs, abs=1e-9 * (1 + abs(lhs)))


@settings(max_examples=100, deadline=None)
@given(c0=st.floats(0.1, 3), dPt=coef, dPr=coef, phi=coef, pt=coef, pr=coef, r=st.floats(0.01, 50))
def test_lnull_bound_holds(c0, dPt, dPr, phi, pt, pr, r):
    assert lnull_bound_ratio(c0 * CoeffTensor.q0(), dPt, dPr, phi, pt, pr, r) <= 1.0
