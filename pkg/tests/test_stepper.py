import numpy as np
import pytest
import scipy.sparse.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nsch.constitutive import PhysicalParams, ViscousOperator, make_profile
from nsch.grid import Grid
from nsch.potential import PotentialParams, RegularizedPotential
from nsch.runner import simulate
from nsch.state import InitialData, build_initial_state, preset, validate_initial_data
from nsch.stepper import (CflError, EnergyViolationError, StepConfig, calibrate_energy_scale, cfl_number,
                          step, step_continuity)

POT = PotentialParams(1.0, 2.0, 2.0)


def physics(eta="rational:0.5,1.0", lam="constant:0"):
    return PhysicalParams(POT, make_profile(eta, lam))


def start(data, eps=0.1):
    adm = validate_initial_data(data, POT)
    return build_initial_state(adm, eps), adm


# ----------------------------------------------------------------------
# continuity

def test_zero_velocity_keeps_density():
    g = Grid((10,), (1.0,))
    rho = np.linspace(0.5, 2.0, 10)
    r1, _ = step_continuity(g, rho, (np.zeros(11),), 0.1)
    assert np.array_equal(r1, rho)


def test_cfl_violation_raises():
    g = Grid((10,), (1.0,))
    u = np.ones(11)
    u[[0, -1]] = 0
    with pytest.raises(CflError):
        step_continuity(g, np.ones(10), (u,), 0.09, cfl_safety=0.5)


def _random_wall_velocity(rng, g):
    u = []
    for k in range(g.dim):
        v = rng.normal(size=g.face_shape(k))
        v[~g.interior_face_mask(k)] = 0.0
        u.append(v)
    return tuple(u)


def test_mass_exact_over_many_random_steps(rng):
    g = Grid((24, 16), (2.0, 1.0))
    rho = rng.uniform(0.2, 3.0, size=g.cells)
    M0 = g.integrate(rho)
    for _ in range(1000):
        u = _random_wall_velocity(rng, g)
        dt = 0.5 / cfl_number(g, u)
        rho, _ = step_continuity(g, rho, u, dt)
    assert abs(g.integrate(rho) - M0) / M0 <= 1e-12
    assert np.all(rho >= 0)


@settings(max_examples=60, deadline=None)
@given(arrays(float, 12, elements=st.floats(0.0, 10.0)), arrays(float, 13, elements=st.floats(-5, 5, allow_subnormal=False)),
       st.floats(0.05, 1.0))
def test_donor_cell_positive_and_conservative(rho, u, frac):
    g = Grid((12,), (3.0,))
    u = u.copy()
    u[[0, -1]] = 0.0
    rate = cfl_number(g, (u,))
    dt = min(frac / rate, 1e6) if rate > 0 else 0.1
    r1, _ = step_continuity(g, rho, (u,), dt, cfl_safety=1.0)
    assert np.all(r1 >= -1e-12 * (1 + rho.max()))
    assert abs(g.integrate(r1) - g.integrate(rho)) <= 1e-12 * (1 + g.integrate(rho))


def test_bump_translates_with_constant_velocity():
    errs = []
    for n in (100, 200, 400):
        g = Grid((n,), (10.0,))
        x = g.cell_centers()[0]
        rho = np.exp(-((x - 3.0) / 0.5) ** 2)
        u = np.ones(n + 1)
        u[[0, -1]] = 0.0
        dt = 0.4 * g.spacing[0]
        m = int(round(4.0 / dt))
        r = rho.copy()
        for _ in range(m):
            r, _ = step_continuity(g, r, (u,), dt)
        shift = m * dt
        assert g.integrate(r) == pytest.approx(g.integrate(rho), rel=1e-13)
        assert g.integrate(r * x) / g.integrate(r) == pytest.approx(3.0 + shift, abs=1e-6)
        errs.append(g.integrate(np.abs(r - np.exp(-((x - 3.0 - shift) / 0.5) ** 2))))
    assert errs[0] / errs[1] > 1.4 and errs[1] / errs[2] > 1.4


# ----------------------------------------------------------------------
# full step

@pytest.mark.parametrize("cells", [(16,), (8, 6)])
def test_equilibrium_is_a_fixed_point(cells):
    g = Grid(cells, tuple(4.0 for _ in cells))
    s, adm = start(preset("uniform", g, rho=1.3, c=0.25))
    params = physics()
    new, rec = step(s, StepConfig(dt=0.1), params, adm.M_r)
    reg = RegularizedPotential(POT, 0.1)
    assert np.allclose(new.c.values, 0.25, rtol=0, atol=1e-14)
    assert np.allclose(new.rho.values, 1.3, rtol=0, atol=1e-14)
    assert np.allclose(new.mu.values, reg.prime(0.25) - 2.0 * 0.25, rtol=1e-13)
    assert all(np.max(np.abs(c)) <= 1e-14 for c in new.u.components)
    assert rec.visc_dissipation == 0.0 and rec.mu_dissipation <= 1e-26
    assert abs(rec.energy_defect) <= 1e-12


def test_viscous_decay_against_operator_spectrum():
    g = Grid((16, 16), (4.0, 4.0))
    params = physics("constant:1.0")
    s, adm = start(preset("shear", g, amplitude=1e-4, c_amp=0.0, mean=0.2))
    op = ViscousOperator(g, np.ones(g.cells), np.zeros(g.cells))
    lam_min = sla.eigsh(op.restricted() / g.cell_volume, k=1, sigma=0, which="LM")[0][0]
    dt = 0.05
    bound = (1.0 + dt * lam_min) ** -2
    ke = lambda st_: 0.5 * sum(g.integrate_faces(c * c) for c in st_.u.components)
    cfg = StepConfig(dt=dt)
    k_prev = ke(s)
    for n in range(60):
        s, _ = step(s, cfg, params, adm.M_r)
        k = ke(s)
        assert k < k_prev
        if n < 20:  # before the slaved acoustic modes dominate the tiny remainder
            assert k / k_prev <= bound * (1 + 1e-6)
        k_prev = k


@pytest.mark.parametrize("form,tol", [("conservative", 1e-4), ("energy", 1e-2)])
def test_momentum_nearly_conserved_when_inviscid(form, tol):
    g = Grid((128,), (32.0,))
    params = physics("constant:1e-8")
    x, xf = g.cell_centers()[0], g.face_centers(0)[0]
    u = 0.05 * np.exp(-((xf - 16) / 1.5) ** 2)
    u[[0, -1]] = 0.0
    c = 0.1 + 0.2 * np.exp(-((x - 16) / 2) ** 2)
    s, adm = start(InitialData.from_velocity(g, np.ones(128), c, (u,)))
    res = simulate(s, StepConfig(dt=0.05, force_form=form), params, 100, adm.M_r, keep_every=10)
    mom = [g.integrate_faces(g.face_average(q.rho.values, 0) * q.u.components[0]) for q in res.trajectory.states]
    assert max(abs(m - mom[0]) for m in mom) <= tol * abs(mom[0])


def test_concentration_mass_conserved_over_1000_steps():
    g = Grid((32,), (8.0,))
    s, adm = start(preset("advection", g))
    res = simulate(s, StepConfig(dt=0.02, strict=True), physics(), 1000, adm.M_r)
    r0, r1 = res.records[0], res.records[-1]
    assert abs(r1.M_c - r0.M_c) / abs(r0.M_c) <= 1e-12
    assert abs(r1.M - r0.M) / r0.M <= 1e-12


@pytest.mark.parametrize("eps", [1e-1, 1e-2])
def test_spinodal_sup_norm_bound(eps):
    g = Grid((64,), (16.0,))
    s, adm = start(preset("spinodal", g, mean=0.1, amplitude=1e-3, seed=3), eps)
    res = simulate(s, StepConfig(dt=0.1, strict=True), physics(), 500, adm.M_r)
    cmax = max(max(abs(r.cmin), r.cmax) for r in res.records)
    assert cmax > 0.5  # phase separation happened
    assert cmax <= 1.0 + eps


def _acoustic_checkerboard():
    g = Grid((32,), (32.0,))
    rho = 1.0 + 0.05 * np.cos(np.pi * np.arange(32))
    s, adm = start(InitialData.from_velocity(g, rho, np.full(32, 0.1)), eps=0.05)
    return s, adm, physics("constant:0.001")


def test_strict_mode_aborts_on_oversized_step():
    s, adm, params = _acoustic_checkerboard()
    with pytest.raises(EnergyViolationError):
        simulate(s, StepConfig(dt=0.8, cfl_safety=1.0, strict=True), params, 50, adm.M_r)
    res = simulate(s, StepConfig(dt=0.8, cfl_safety=1.0, strict=True), params, 50, adm.M_r, catch=True)
    assert isinstance(res.error, EnergyViolationError) and res.steps_done < 50


def test_small_step_passes_the_same_audit():
    s, adm, params = _acoustic_checkerboard()
    res = simulate(s, StepConfig(dt=0.1, cfl_safety=1.0, strict=True), params, 300, adm.M_r)
    assert all(r.energy_ok for r in res.records)


def test_calibration_constant():
    s, adm, params = _acoustic_checkerboard()
    K = calibrate_energy_scale(s, StepConfig(dt=0.1), params)
    assert K > 0
    assert calibrate_energy_scale(s, StepConfig(dt=0.1, frozen_velocity=True), params) == 0.0


def test_step_config_validation():
    for kw in ({"dt": 0}, {"dt": 0.1, "cfl_safety": 1.5}, {"dt": 0.1, "force_form": "x"},
               {"dt": 0.1, "energy_scale": -1.0}):
        with pytest.raises(ValueError):
            StepConfig(**kw)
