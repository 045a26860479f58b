import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nsch.constitutive import energy_density
from nsch.fieldio import write_field
from nsch.grid import Grid
from nsch.potential import PotentialParams, RegularizedPotential
from nsch.state import (COND_GAMMA, COND_I1, COND_I2, COND_K, COND_THERMO, PRESETS, InadmissibleDataError,
                        InitialData, build_initial_state, check_initial_data, preset,
                        validate_initial_data)

P = PotentialParams(1.0, 2.0, 2.0)


def conditions(exc):
    return {v.condition for v in exc.value.violations}


def test_trivial_data_accepted():
    g = Grid((10,), (1.0,))
    adm = validate_initial_data(InitialData.from_velocity(g, np.ones(10), np.zeros(10)), P)
    assert adm.M == pytest.approx(1.0) and adm.M_c == 0.0 and adm.M_r == 0.0


@pytest.mark.parametrize("cval", [1.0, -1.0])
def test_pure_phase_rejected(cval):
    g = Grid((10,), (1.0,))
    with pytest.raises(InadmissibleDataError) as exc:
        validate_initial_data(InitialData.from_velocity(g, np.ones(10), np.full(10, cval)), P)
    assert conditions(exc) == {COND_K}


def test_cosine_data_mass_ratio():
    L = 3.0
    g = Grid((64,), (L,))
    x = g.cell_centers()[0]
    adm = validate_initial_data(InitialData.from_velocity(g, np.ones(64), 0.2 + 0.5 * np.cos(2 * np.pi * x / L)), P)
    assert adm.M_r == pytest.approx(0.2, abs=1e-14)
    assert adm.M_c == pytest.approx(0.2 * L, abs=1e-13)


def test_all_violations_collected():
    g = Grid((8,), (1.0,))
    rho = np.ones(8)
    rho[:4] = 0.0
    u = np.full(9, 0.5)
    u[[0, -1]] = 0.0
    m0 = (u,)  # momentum on the vacuum faces
    data = InitialData(g, rho, np.zeros(8), m0)
    with pytest.raises(InadmissibleDataError) as exc:
        validate_initial_data(data, {"gamma": 1.2, "theta": 3.0, "theta0": 2.0})
    assert {COND_GAMMA, COND_THERMO, COND_I2} <= conditions(exc)


def test_out_of_range_concentration():
    g = Grid((8,), (1.0,))
    c = np.zeros(8)
    c[3] = 1.2
    with pytest.raises(InadmissibleDataError) as exc:
        validate_initial_data(InitialData.from_velocity(g, np.ones(8), c), P)
    assert COND_I1 in conditions(exc)


def test_uniform_state_mu():
    g = Grid((6, 4), (1.0, 2.0))
    adm = validate_initial_data(preset("uniform", g, rho=1.3, c=0.4), P)
    st_ = build_initial_state(adm, 0.05)
    reg = RegularizedPotential(P, 0.05)
    assert np.allclose(st_.mu.values, reg.prime(0.4) - 2.0 * 0.4, rtol=1e-14)


def test_spinodal_energy_near_baseline():
    g = Grid((256,), (64.0,))
    adm = validate_initial_data(preset("spinodal", g, mean=0.1, amplitude=1e-3, seed=1), P)
    assert adm.M_r == pytest.approx(0.1, abs=1e-15)
    u0 = tuple(np.zeros(g.face_shape(k)) for k in range(g.dim))
    base = g.integrate(energy_density(g, np.ones(256), u0, np.full(256, 0.1), 2.0, 2.0, 1.0))
    assert abs(adm.E0 - base) <= 1e-3 * g.volume
    again = preset("spinodal", g, mean=0.1, amplitude=1e-3, seed=1)
    assert again.c0.tobytes() == adm.c0.tobytes()


@pytest.mark.parametrize("name,grid", [("uniform", (8,)), ("spinodal", (16,)), ("bubble", (12, 12)),
                                       ("shear", (12, 10)), ("advection", (16,))])
def test_presets_admissible(name, grid):
    g = Grid(grid, tuple(8.0 for _ in grid))
    adm = validate_initial_data(preset(name, g), P)
    assert np.isfinite(adm.E0)
    st_ = build_initial_state(adm, 0.05)
    assert np.all(np.isfinite(st_.mu.values))


def test_shear_velocity_divergence_free():
    g = Grid((16, 12), (8.0, 6.0))
    adm = validate_initial_data(preset("shear", g), P)
    assert np.max(np.abs(g.div(adm.u0))) < 1e-12


def test_file_preset(tmp_path):
    g = Grid((5,), (2.0,))
    write_field(tmp_path / "r.nschf", np.full(5, 2.0), g.spacing)
    write_field(tmp_path / "c.nschf", np.linspace(-0.5, 0.5, 5), g.spacing)
    u = np.array([0.0, 0.1, 0.2, 0.2, 0.1, 0.0])
    write_field(tmp_path / "u.nschf", u, g.spacing)
    d = preset("file", g, rho_file=tmp_path / "r.nschf", c_file=tmp_path / "c.nschf",
               u_files=str(tmp_path / "u.nschf"))
    adm = validate_initial_data(d, P)
    assert np.allclose(adm.u0[0], u)
    with pytest.raises(ValueError):
        preset("nope", g)
    assert "file" in PRESETS


@settings(max_examples=80, deadline=None)
@given(st.floats(0.01, 5.0), st.floats(-1.0, 1.0), st.floats(-1.0, 1.0), st.integers(1, 19))
def test_mass_ratio_of_two_phase_data(rho, a, b, k):
    g = Grid((20,), (1.0,))
    c = np.where(np.arange(20) < k, a, b)
    violations, d = check_initial_data(InitialData.from_velocity(g, np.full(20, rho), c), P)
    expect = (k * a + (20 - k) * b) / 20
    assert d["M_r"] == pytest.approx(expect, abs=1e-12)
    assert (abs(expect) < 1 - 1e-12) <= (not violations)
