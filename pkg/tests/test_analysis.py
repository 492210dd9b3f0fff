import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nullwave import energetics as en
from nullwave.analysis import (dyadic_extract, fit_decay, gronwall_check, pointwise_decay_scan,
                               weighted_time_identity_check)
from nullwave.errors import InsufficientData, WindowError

TAUS = np.linspace(0.0, 200.0, 2001)


def powerlaw(p, c=1.0):
    return TAUS, c * (1 + TAUS) ** p


def test_fit_exact_power():
    f = fit_decay(powerlaw(-1.5), window=(10, 180))
    assert f.exponent == pytest.approx(-1.5, abs=1e-10) and f.r_squared == pytest.approx(1.0, abs=1e-12)
    assert fit_decay(powerlaw(0.0), window=(10, 180)).exponent == pytest.approx(0.0, abs=1e-12)


def test_fit_floored(free_field):
    s = en.energy_series(free_field, stride=0.5)
    with pytest.raises(InsufficientData):
        fit_decay(s, "E", (10, 18))
    f = fit_decay(s, "E", (0, 18))
    assert f.floored and f.exponent < -1


@settings(max_examples=50, deadline=None)
@given(p=st.floats(-4, 1), c=st.floats(1e-6, 1e6))
def test_fit_scale_invariant(p, c):
    a = fit_decay(powerlaw(p), window=(10, 180))
    b = fit_decay(powerlaw(p, c), window=(10, 180))
    assert abs(a.exponent - b.exponent) <= 1e-12 * max(1, abs(p)) + 1e-12
    assert b.amplitude == pytest.approx(c * a.amplitude, rel=1e-9)


def test_dyadic_power():
    blocks = dyadic_extract(powerlaw(-1.5), gamma=2.0)
    assert blocks and all(b.passed for b in blocks)
    for b in blocks:
        assert b.block[0] <= b.tau_n <= b.block[1]


def test_dyadic_negative_control():
    blocks = dyadic_extract((TAUS, np.ones_like(TAUS)), gamma=2.0, budget=1.0)
    assert not all(b.passed for b in blocks)


def test_dyadic_window_errors():
    with pytest.raises(WindowError):
        dyadic_extract(powerlaw(-1.5), gamma=1.0)
    with pytest.raises(WindowError):
        dyadic_extract(powerlaw(-1.5), gamma=2.0, n_range=[9])


@settings(max_examples=50, deadline=None)
@given(p=st.floats(-3, 0.5), gamma=st.floats(1.5, 4.0))
def test_dyadic_certificate_implied(p, gamma):
    # pigeonhole: a block integral within budget forces a passing certificate
    t, v = powerlaw(p)
    blocks = dyadic_extract((t, v), gamma=gamma)
    budget = float(np.sum(np.diff(t) * 0.5 * (v[1:] + v[:-1])))
    for b in blocks:
        assert b.block[0] - 1e-9 <= b.tau_n <= b.block[1] + 1e-9
        if b.block_integral <= budget:
            assert b.passed


def test_weighted_time_examples():
    assert weighted_time_identity_check(lambda s: np.ones_like(s), 1.0, 1.0, 2.0) <= 1e-12
    assert weighted_time_identity_check(lambda s: s, 2.0, 1.0, 2.0) <= 1e-12
    s = np.linspace(1.0, 2.0, 11)
    assert weighted_time_identity_check((s, s**0), 1.0, 1.0, 2.0) <= 1e-12


@settings(max_examples=50, deadline=None)
@given(vals=st.lists(st.floats(-5, 5), min_size=4, max_size=30), beta=st.floats(0.1, 3.0))
def test_weighted_time_piecewise_linear(vals, beta):
    s = np.linspace(1.0, 7.0, len(vals))
    assert weighted_time_identity_check((s, np.array(vals)), beta, 1.0, 7.0) <= 1e-10 * (1 + np.max(np.abs(vals)))


def test_weighted_time_measured(null_field):
    # refinement in sample density for a measured g-bar series
    s = en.energy_series(null_field, stride=0.1)
    res = []
    for step in (4, 2, 1):
        t = s.taus[::step]
        f = s.gbar2a[::step]
        ref = weighted_time_identity_check((t, f), 0.5, t[0], t[-1])
        res.append(ref)
    assert max(res) <= 1e-12 * max(1.0, float(np.max(s.gbar2a)))


def test_gronwall_trivial():
    t = np.linspace(0.0, 10.0, 101)
    rep = gronwall_check((t, np.ones_like(t)), (t, np.ones_like(t)), 2.0, 1.0, 0.0)
    assert rep.meta["hypothesis_holds"] and rep.passed
    rep = gronwall_check((t, 1 + t), (t, 1 + t), 1.0, 1.0, 0.0)
    assert rep.meta["hypothesis_holds"] and rep.passed


def test_gronwall_hypothesis_fails_reported():
    t = np.linspace(0.0, 10.0, 101)
    rep = gronwall_check((t, 10 * np.ones_like(t)), (t, np.ones_like(t)), 0.1, 1.0)
    assert not rep.meta["hypothesis_holds"] and "hypothesis_fails" in rep.meta
    with pytest.raises(ValueError):
        gronwall_check((t, t), (t, -t), 1.0, 1.0)


def test_gronwall_linear_run(free_field):
    s = en.energy_series(free_field, stride=0.5)
    E1 = np.full_like(s.E, s.E[0] * (1 + 10 * free_field.grid.h ** 2))
    rep = gronwall_check((s.taus, s.E), (s.taus, E1), 0.5, 0.25)
    assert rep.meta["hypothesis_holds"] and rep.passed


def test_pointwise_zero(zero_field):
    rep = pointwise_decay_scan(zero_field, 0.25, t_max=8.0)
    assert rep.C_phi == 0.0 and rep.C_dphi == 0.0


def test_pointwise_free_stable():
    from conftest import bump_problem, evolve
    c = []
    for h in (0.05, 0.025):
        f = evolve(bump_problem(1.0), 12.0, h)
        c.append(pointwise_decay_scan(f, 0.25, t_max=10.0))
    assert c[1].C_phi == pytest.approx(c[0].C_phi, rel=0.2)
    assert c[1].C_dphi == pytest.approx(c[0].C_dphi, rel=0.2)
    assert np.isfinite(c[1].C_phi) and c[1].C_phi > 0


def test_pointwise_linear_in_eps():
    from conftest import evolve, nullform_problem
    c = [pointwise_decay_scan(evolve(nullform_problem(eps), 20.0, 0.05), 0.25, t_max=18.0).C_phi
         for eps in (2e-3, 1e-3)]
    assert 1.7 <= c[0] / c[1] <= 2.3
