import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nsch.potential import (DomainError, ParameterError, PotentialParams, RegularizedPotential,
                            elastic_affine_shift, elastic_energy, elastic_energy_quadrature, enthalpy,
                            flory_huggins, flory_huggins_prime, flory_huggins_second, g_eps_prime,
                            reg_second, verify_potential)


def reg(theta=1.0, theta0=2.0, eps=0.1, gamma=2.0):
    return RegularizedPotential(PotentialParams(theta, theta0, gamma), eps)


def test_closed_form_values():
    assert flory_huggins(0.0, 1.0) == 0.0
    assert flory_huggins(0.5, 1.0) == pytest.approx(0.13081203594, abs=1e-10)
    assert flory_huggins_prime(0.0, 1.0) == 0.0
    assert flory_huggins_second(0.0, 1.7) == pytest.approx(1.7)
    assert flory_huggins_prime(0.9, 2.0) == pytest.approx(math.log(19.0), rel=1e-14)


def test_endpoints_and_domain():
    assert flory_huggins(1.0, 1.0) == pytest.approx(math.log(2.0))
    with pytest.raises(DomainError):
        flory_huggins(1.2, 1.0)
    with pytest.raises(DomainError):
        flory_huggins_prime(1.0, 1.0)


def test_regularized_inner_region_is_exact():
    r = reg(eps=0.1)
    assert r.value(0.3) == flory_huggins(0.3, 1.0)
    assert r.prime(-0.3) == flory_huggins_prime(-0.3, 1.0)


def test_regularized_taylor_value():
    r = reg(theta=2.0, theta0=3.0, eps=0.1)
    F, F1, F2 = 0.9892639, 2.9444390, 10.5263158
    assert r.value(1.0) == pytest.approx(F + 0.1 * F1 + 0.005 * F2, abs=1e-6)
    assert r.value(1.0) == pytest.approx(1.33633935129, abs=1e-10)


def test_outer_second_derivative_constant():
    r = reg(eps=0.05)
    c = np.linspace(0.951, 7.0, 50)
    assert np.all(reg_second(c, r) == flory_huggins_second(0.95, 1.0))


def test_g_eps_prime():
    r = reg(theta=1.0, theta0=2.0)
    assert g_eps_prime(0.0, r) == pytest.approx(-1.0)
    c = np.linspace(0.95, 5, 20)
    assert np.allclose(g_eps_prime(c, r), r.f2_s - 2.0)


def test_parameter_validation():
    with pytest.raises(ParameterError):
        PotentialParams(2.0, 1.0, 2.0)
    with pytest.raises(ParameterError):
        PotentialParams(1.0, 2.0, 1.5)
    with pytest.raises(ParameterError):
        reg(eps=0.5)


def test_elastic_energy():
    assert elastic_energy(0.0, 2.0) == 0.0
    assert elastic_energy(1.0, 2.0) == 1.0
    assert elastic_energy(2.0, 5 / 3) == pytest.approx(2 ** (5 / 3) / (2 / 3), rel=1e-14)
    assert elastic_energy(2.0, 5 / 3) == pytest.approx(4.7622031559, abs=1e-9)
    with pytest.raises(DomainError):
        elastic_energy(-1.0, 2.0)


def test_enthalpy_is_derivative():
    rho = np.linspace(0.2, 3.0, 9)
    h = 1e-6
    fd = (elastic_energy(rho + h, 1.8) - elastic_energy(rho - h, 1.8)) / (2 * h)
    assert np.allclose(enthalpy(rho, 1.8), fd, rtol=1e-8)


def test_quadrature_matches_closed_form_up_to_shift():
    for rho in (0.1, 1.0, 2.5):
        q = elastic_energy_quadrature(rho, 2.3)
        assert q == pytest.approx(elastic_energy(rho, 2.3) + elastic_affine_shift(rho, 2.3), abs=1e-10)


@pytest.mark.parametrize("theta,theta0,eps", [(1, 2, 1e-1), (1, 2, 1e-3), (0.5, 1, 1e-2), (1.5, 4, 0.3)])
def test_verify_potential_passes(theta, theta0, eps):
    rows = verify_potential(theta, theta0, eps)
    assert all(r["passed"] for r in rows), [r for r in rows if not r["passed"]]


thetas = st.floats(0.1, 5.0)
epss = st.floats(1e-4, 0.45)
cs = st.floats(-0.999999, 0.999999)


@settings(max_examples=200, deadline=None)
@given(thetas, epss, cs)
def test_envelope_below_singular_potential(theta, eps, c):
    r = reg(theta=theta, theta0=theta + 1.0, eps=eps)
    F = flory_huggins(c, theta)
    assert r.value(c) <= F + 8 * np.finfo(float).eps * max(abs(F), 1.0)
    d = abs(flory_huggins_prime(c, theta))
    assert abs(r.prime(c)) <= d + 8 * np.finfo(float).eps * max(d, 1.0)


@settings(max_examples=200, deadline=None)
@given(thetas, epss, st.floats(-50, 50))
def test_symmetry_and_convexity(theta, eps, c):
    r = reg(theta=theta, theta0=theta + 1.0, eps=eps)
    assert r.value(c) == r.value(-c)
    assert r.prime(c) == -r.prime(-c)
    assert r.second(c) >= theta


@settings(max_examples=200, deadline=None)
@given(thetas, epss, st.floats(-50, 50), st.floats(-50, 50))
def test_prime_monotone(theta, eps, a, b):
    r = reg(theta=theta, theta0=theta + 1.0, eps=eps)
    if a < b:
        assert r.prime(a) <= r.prime(b)


@settings(max_examples=100, deadline=None)
@given(thetas, epss)
def test_seam_continuity(theta, eps):
    r = reg(theta=theta, theta0=theta + 1.0, eps=eps)
    s = 1.0 - eps
    below, above = np.nextafter(s, 0.0), np.nextafter(s, 2.0)
    assert r.value(above) == pytest.approx(r.value(below), rel=1e-9)
    assert r.prime(above) == pytest.approx(r.prime(below), rel=1e-9)
