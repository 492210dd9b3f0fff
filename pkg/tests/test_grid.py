import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from nullwave.errors import ConfigError, OutOfRange
from nullwave.grid import build_grid, slice as leaf, spacetime_cells, tslice, write_slices_csv
from nullwave.profiles import Bump, char_phi

from conftest import GAUSS


def test_build_grid_basic():
    g = build_grid(10.0, 2.0, 0.1)
    assert g.v_max >= 6.0 + 2.0 - 1e-12
    assert g.R == pytest.approx(2.0)
    taus = g.diagnostic_times(1.0)
    n = np.round(taus / 0.1).astype(int)
    assert np.allclose(n * 0.1, taus) and np.all(n % 2 == 0)


def test_degenerate_and_misaligned():
    g = build_grid(0.0, 2.0, 0.1)
    assert g.n_max == 0 and g.size == len(g.row_k(0))
    with pytest.raises(ConfigError) as e:
        build_grid(10.0, 2.05, 0.1)
    assert e.value.key == "R"
    with pytest.raises(ConfigError):
        build_grid(10.0, 2.0, -0.1)


@settings(max_examples=200, deadline=None)
@given(n=st.integers(0, 4000), j=st.integers(0, 2000), h=st.sampled_from([0.1, 0.05, 0.02, 0.01]))
def test_coordinate_round_trip(n, j, h):
    k = n % 2 + 2 * (j % (n // 2 + 1))
    g = build_grid(10.0, 2.0, h)
    u, v = g.uv(n, k)
    t, r = v + u, v - u
    assert round(t / h) == n and round(r / h) == k
    assert 0.5 * (t - r) == pytest.approx(u, abs=1e-12) and 0.5 * (t + r) == pytest.approx(v, abs=1e-12)


def test_initial_leaf_reproduces_data(free_field):
    sl = leaf(free_field, 0.0)
    # row 0 holds the even k; odd k are interpolated in time
    assert np.allclose(sl.phi_in[2::2], Bump(2.0, 1.0)(sl.r_in[2::2]), rtol=0, atol=1e-15)


def test_zero_field_slice(zero_field):
    sl = leaf(zero_field, 4.0)
    for a in (sl.phi_in, sl.phi_t_in, sl.phi_r_in, sl.phi_ex, sl.dvpsi, sl.dupsi):
        assert not np.any(a)


def test_slice_closed_form_order(manufactured_fields):
    errs = []
    for h, f in sorted(manufactured_fields.items(), reverse=True):
        sl = leaf(f, 4.0)
        phi, pt, pr = char_phi(GAUSS, sl.tau + 0 * sl.r_in, sl.r_in)
        e_in = max(np.max(np.abs(sl.phi_in - phi)), np.max(np.abs(sl.phi_t_in - pt)), np.max(np.abs(sl.phi_r_in - pr)))
        u = 0.5 * (sl.tau - sl.R)
        dv = -GAUSS.deriv(sl.v_ex, 1)
        du = GAUSS.deriv(u + 0 * sl.v_ex, 1)
        e_ex = max(np.max(np.abs(sl.dvpsi - dv)), np.max(np.abs(sl.dupsi - du)))
        errs.append(max(e_in, e_ex))
    assert errs[1] < 0.01
    assert np.log2(errs[0] / errs[1]) >= 1.8


def test_slice_linearity(free_field, null_field):
    a, b = 0.7, -1.3
    comb = free_field.combine(a, null_field, b)
    comb.grid = free_field.grid
    s1, s2, s3 = leaf(free_field, 6.0), leaf(null_field, 6.0), leaf(comb, 6.0)
    for name in ("phi_in", "phi_t_in", "phi_r_in", "phi_ex", "dvpsi", "dupsi"):
        x = a * getattr(s1, name) + b * getattr(s2, name)
        assert np.allclose(getattr(s3, name), x, rtol=0, atol=1e-13 * (1 + np.max(np.abs(x))))


def test_slice_out_of_range(free_field):
    with pytest.raises(OutOfRange):
        leaf(free_field, 0.05)
    with pytest.raises(OutOfRange):
        leaf(free_field, 500.0)


def test_tslice_energy_free(free_field):
    # the free field's t-slices carry the same energy (checked loosely here, strictly in the acceptance suite)
    e = []
    for t in (0.0, 2.0, 4.0):
        s = tslice(free_field, t)
        e.append(np.trapezoid(0.5 * (s.phi_t**2 + s.phi_r**2) * s.r**2, s.r))
    assert np.ptp(e) < 1e-2 * e[0]


def region_volume(t1, t2, R, v_cut):
    # r^2 dt dr over the region between two hybrid leaves (4 pi dropped); dt dr = 2 du dv
    inner = (t2 - t1) * R**3 / 3.0
    outer = quad(lambda u: (2.0 / 3.0) * ((v_cut - u) ** 3 - R**3), 0.5 * (t1 - R), 0.5 * (t2 - R))[0]
    return inner + outer


def test_cell_volume_oracle():
    g = build_grid(10.0, 2.0, 0.05)
    vol = spacetime_cells(g, 2.0, 4.0).volume()
    ref = region_volume(2.0, 4.0, 2.0, g.v_cut)
    assert abs(vol - ref) <= 1e-3 * ref


def test_cells_additive_and_empty():
    g = build_grid(10.0, 2.0, 0.05)
    assert spacetime_cells(g, 3.0, 3.0).volume() == 0.0
    a = spacetime_cells(g, 2.0, 4.0).volume() + spacetime_cells(g, 4.0, 6.0).volume()
    assert spacetime_cells(g, 2.0, 6.0).volume() == pytest.approx(a, rel=1e-12)
    with pytest.raises(OutOfRange):
        spacetime_cells(g, 2.0, 4.0, R=400.0)


def test_exterior_cells_volume():
    g = build_grid(10.0, 2.0, 0.05)
    vol = spacetime_cells(g, 2.0, 4.0, region="exterior").volume()
    ref = region_volume(2.0, 4.0, 2.0, g.v_cut) - 2.0 * 2.0**3 / 3.0
    assert abs(vol - ref) <= 1e-3 * ref


def test_write_slices_csv(tmp_path, free_field):
    p = tmp_path / "s.csv"
    write_slices_csv([leaf(free_field, 2.0), leaf(free_field, 4.0)], p)
    data = np.genfromtxt(p, delimiter=",", names=True, dtype=None, encoding=None)
    assert set(np.unique(data["tau"])) == {2.0, 4.0}
