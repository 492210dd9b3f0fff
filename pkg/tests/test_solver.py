import numpy as np
import pytest

from nullwave import profiles, solver
from nullwave.background import BackgroundSpec, WeakWaveParams
from nullwave.coeffs import CoeffTensor
from nullwave.errors import BlowupDetected, ConfigError, NoBlowup, NotConverged
from nullwave.grid import build_grid, slice as leaf
from nullwave.solver import PointState, SchemeOptions, assemble_rhs

from conftest import GAUSS, bump_problem, evolve, manufactured_problem


def lattice_error(field, exact):
    g = field.grid
    e = 0.0
    for n in range(field.n_done + 1):
        u, v = g.uv(n, g.row_k(n))
        e = max(e, float(np.max(np.abs(field.row(n) - exact(u, v)))))
    return e


def test_manufactured_convergence(manufactured_fields):
    errs = [lattice_error(manufactured_fields[h], lambda u, v: GAUSS(u) - GAUSS(v)) for h in (0.04, 0.02)]
    assert errs[1] < 1e-5
    # at least second order; the diamond rule is exact for free waves, so only start-up error remains
    assert errs[0] / errs[1] >= 3.4


def test_zero_data(zero_field):
    assert zero_field.completed and not np.any(zero_field.psi)


def test_rhs_examples():
    p = solver.ProblemSpec()
    assert assemble_rhs(p, PointState(1.0, 1.0, 0.3, 0.2, 0.1)) == 0.0
    ww = WeakWaveParams(delta=0.2, alpha=0.25, t0=2.0, R1=1.0)
    bg = BackgroundSpec("static_profile", {"amp": 0.2}, ww)
    from nullwave.background import eval_background
    s = eval_background(bg, 1.0, 2.0)
    p = solver.ProblemSpec(B=2.0 * CoeffTensor.q0(), background=bg)
    # B = c Q0 gives N = c (Phi_t phi_t - Phi_r phi_r); with phi_t = 0 only -c Phi_r phi_r is left
    val = assemble_rhs(p, PointState(1.0, 2.0, 0.0, 0.0, 0.7, s))
    assert val == pytest.approx(-(-2.0 * float(s.phi_r) * 0.7), rel=1e-15)
    p = solver.ProblemSpec(A=CoeffTensor.q0())
    assert assemble_rhs(p, PointState(1.0, 1.0, 0.0, 0.4, 0.4)) == 0.0
    p = solver.ProblemSpec(A=CoeffTensor.e00())
    assert assemble_rhs(p, PointState(1.0, 1.0, 0.0, 0.4, 0.1)) == pytest.approx(0.16)


def test_time_translation():
    # data from a(s + 1) is the original solution two time units later
    a2 = profiles.GaussOdd(1.0, 1.0, -1.0)
    p2 = manufactured_problem(a2)
    h = 0.04
    f1 = evolve(manufactured_problem(), 10.0, h, R=2.0)
    f2 = evolve(p2, 6.0, h, R=2.0, v_max=f1.grid.v_max - 1.0)
    g1, g2 = f1.grid, f2.grid
    shift = int(round(2.0 / h))
    worst = 0.0
    for n in range(0, g2.n_max - 2, 5):
        k = g2.row_k(n)
        k = k[g1.contains(n + shift, k)]
        worst = max(worst, np.max(np.abs(f2.psi[g2.index(n, k)] - f1.psi[g1.index(n + shift, k)])))
    assert worst < 50 * h**2 * 1e-2


def test_nonlinear_approaches_linear():
    A = CoeffTensor.q0()
    diffs = []
    for eps in (0.02, 0.01):
        fl = evolve(bump_problem(eps), 10.0, 0.05)
        fn = evolve(bump_problem(eps, A=A), 10.0, 0.05)
        diffs.append(solver.sup_phi_difference(fl, fn))
    assert diffs[0] / diffs[1] == pytest.approx(4.0, rel=0.15)


def test_axis_regular(null_field):
    for tau in null_field.grid.diagnostic_times(2.0, 16.0):
        sl = leaf(null_field, tau)
        assert np.all(np.isfinite(sl.phi_in)) and abs(sl.phi_in[0]) < 1.0


def test_commuted_free_wave():
    # oracle: centred time difference of the base field, (psi(n+2) - psi(n-2)) / 4h
    errs = []
    for h in (0.05, 0.025):
        f = evolve(bump_problem(1.0), 10.0, h)
        w = solver.evolve_commuted(f.problem, f, 1)
        g = f.grid
        worst = 0.0
        for n in range(4, int(8 / h)):
            k = g.row_k(n)
            k = k[(k > 2) & g.contains(n + 2, k) & g.contains(n - 2, k)]
            fd = (f.psi[g.index(n + 2, k)] - f.psi[g.index(n - 2, k)]) / (4 * h)
            worst = max(worst, np.max(np.abs(w.psi[g.index(n, k)] - fd)))
        errs.append(worst / np.max(np.abs(w.psi)))
    assert errs[1] < 10 * 0.025**2
    assert errs[0] / errs[1] >= 3.4


def test_commuted_manufactured(manufactured_fields):
    errs = []
    for h in (0.04, 0.02):
        base = manufactured_fields[h]
        w = solver.evolve_commuted(base.problem, base, 1)
        errs.append(lattice_error(w, lambda u, v: 0.5 * (GAUSS.deriv(u, 1) - GAUSS.deriv(v, 1))))
    assert errs[1] < 1e-3 and errs[0] / errs[1] > 3.0


def test_commuted_zero(zero_field):
    w = solver.evolve_commuted(zero_field.problem, zero_field, 1)
    assert not np.any(w.psi)
    with pytest.raises(ConfigError):
        solver.evolve_commuted(zero_field.problem, zero_field, 3)


def test_picard_linear():
    p = bump_problem(1.0)
    rep = solver.picard_solve(p, build_grid(6.0, 4.0, 0.1, R0=2.0), n_max=4)
    assert rep.converged and rep.iterations == 1 and rep.history == [0.0]


def test_picard_small_eps_geometric():
    p = bump_problem(1e-2, A=CoeffTensor.q0())
    rep = solver.picard_solve(p, build_grid(10.0, 4.0, 0.05, R0=2.0), n_max=4, tol=0.0, raise_on_failure=False)
    assert all(r > 5 for r in rep.ratios()[:3])


def test_picard_huge_eps():
    p = bump_problem(5.0, A=CoeffTensor.e00(), phi1=True)
    with pytest.raises(NotConverged):
        solver.picard_solve(p, build_grid(30.0, 4.0, 0.1, R0=2.0), n_max=3)


def test_john_blowup_refinement():
    p = bump_problem(5.0, A=CoeffTensor.e00(), phi1=True)
    study = solver.detect_blowup_time(p, [0.04, 0.02], T=30.0, R=4.0)
    assert study.verdict == "genuine" and all(s == "blowup_detected" for s in study.statuses)
    assert 0 < study.t_stars[-1] < 30 and study.spread <= 0.1


def test_blowup_raise_mode():
    p = bump_problem(5.0, A=CoeffTensor.e00(), phi1=True)
    with pytest.raises(BlowupDetected) as e:
        solver.evolve(p, build_grid(30.0, 4.0, 0.05, R0=2.0), SchemeOptions(on_blowup="raise"))
    assert e.value.t_star > 0


def test_no_blowup():
    with pytest.raises(NoBlowup):
        solver.detect_blowup_time(bump_problem(0.0), [0.1, 0.05], T=10.0)
    with pytest.raises(NoBlowup):
        solver.detect_blowup_time(bump_problem(1e-3, A=CoeffTensor.q0(), phi1=True), [0.1, 0.05], T=200.0, R=4.0)
