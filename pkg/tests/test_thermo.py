import mpmath
import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from lozenge import thermo
from lozenge.geometry import level_from_slope

interior = st.tuples(st.floats(0.03, 0.94), st.floats(0.03, 0.94)).filter(lambda r: r[0] + r[1] < 0.97)


@pytest.mark.parametrize("theta", [0.0, 0.1, 0.7, np.pi / 2, 2.0, 3.0, np.pi])
def test_lobachevsky_matches_clausen(theta):
    # int_0^theta ln(2 sin t) dt = -Cl2(2 theta) / 2
    expected = -float(mpmath.clsin(2, 2 * theta)) / 2
    assert thermo.lobachevsky(theta) == pytest.approx(expected, abs=1e-12)


def test_lobachevsky_vectorized():
    th = np.array([0.3, 1.2])
    assert np.allclose(thermo.lobachevsky(th), [thermo.lobachevsky(0.3), thermo.lobachevsky(1.2)])


def test_surface_tension_negative_and_maximal_entropy_at_centre():
    centre = thermo.surface_tension([1 / 3, 1 / 3])
    assert centre < 0
    assert thermo.surface_tension([0.2, 0.5]) > centre


@settings(max_examples=50, deadline=None)
@given(interior)
def test_gradient_and_hessian_match_finite_differences(rho):
    rho = np.array(rho)
    h = 1e-6
    for i in range(2):
        e = np.eye(2)[i] * h
        fd = (thermo.surface_tension(rho + e) - thermo.surface_tension(rho - e)) / (2 * h)
        assert fd == pytest.approx(thermo.sigma_gradient(rho)[i], abs=1e-6)
        fd2 = (thermo.sigma_gradient(rho + e) - thermo.sigma_gradient(rho - e)) / (2 * h)
        np.testing.assert_allclose(fd2, thermo.sigma_hessian(rho)[:, i], rtol=1e-5, atol=1e-5)


def test_hessian_determinant_is_pi_squared(rng):
    r = rng.uniform(0.01, 0.99, size=(4000, 2))
    r = r[r.sum(axis=1) < 0.99][:1000]
    assert np.max(np.abs(np.linalg.det(thermo.sigma_hessian(r)) - np.pi**2)) < 1e-9


def test_velocity_at_centre():
    # sin(pi/3)^2 / (pi sin(2 pi / 3))
    assert thermo.velocity([1 / 3, 1 / 3]) == pytest.approx(np.sqrt(3) / (2 * np.pi), abs=1e-15)
    assert thermo.velocity([1 / 3, 1 / 3]) == pytest.approx(0.275664, abs=1e-6)


def test_mobility_is_half_velocity(rng):
    r = np.array([[0.1, 0.2], [0.5, 0.4], [0.33, 0.01]])
    assert np.array_equal(thermo.mobility(r), thermo.velocity(r) / 2)


@settings(max_examples=100, deadline=None)
@given(interior)
def test_flux_swap_symmetry(rho):
    w = thermo.flux_W(np.array(rho))
    ws = thermo.flux_W(np.array(rho[::-1]))
    assert w[1] == ws[0]


@settings(max_examples=100, deadline=None)
@given(interior, interior)
def test_flux_is_monotone(a, b):
    a, b = np.array(a), np.array(b)
    assume(np.linalg.norm(a - b) > 1e-6)
    assert np.dot(thermo.flux_W(a) - thermo.flux_W(b), a - b) > 0


@settings(max_examples=40, deadline=None)
@given(interior)
def test_symmetric_jacobian_is_mobility_times_hessian(rho):
    rho = np.array(rho)
    jac = thermo.flux_W_jacobian(rho)
    target = thermo.mobility(rho) * thermo.sigma_hessian(rho)
    assert np.max(np.abs(0.5 * (jac + jac.T) - target)) < 1e-8 * max(1.0, np.abs(target).max())


def test_jacobian_matches_finite_differences():
    rho = np.array([0.2, 0.5])
    h = 1e-6
    fd = np.column_stack([(thermo.flux_W(rho + e) - thermo.flux_W(rho - e)) / (2 * h) for e in np.eye(2) * h])
    np.testing.assert_allclose(thermo.flux_W_jacobian(rho), fd, atol=1e-6)


def test_curl_vanishes_on_diagonal_but_not_off_it():
    assert abs(thermo.curl_W([1 / 3, 1 / 3])) < 1e-12
    assert abs(thermo.curl_W([0.25, 0.25])) < 1e-12
    assert abs(thermo.curl_W([0.2, 0.5])) > 1e-3
    assert abs(thermo.curl_W([0.6, 0.1])) > 1e-3


def test_spectrum_matches_jacobian():
    rho = np.array([0.2, 0.5])
    jac = thermo.flux_W_jacobian(rho)
    tr, det = thermo.hw_spectrum(rho)
    assert tr == pytest.approx(np.trace(jac), rel=1e-10)
    assert det == pytest.approx(np.linalg.det(jac), rel=1e-10)


@pytest.mark.parametrize("rho", [(1 / 3, 1 / 3), (0.2, 0.5), (0.6, 0.1), (0.1, 0.15)])
def test_identity_residuals_small(rho):
    res = thermo.identity_residuals(level_from_slope(rho))
    for key in ("dG_ds1", "dG_ds2", "curl_hat", "curl_rho"):
        assert res[key] < 1e-5, key


def test_level_set_mobility_consistent():
    s = level_from_slope([0.2, 0.5])
    hh = thermo.sigma_hat_hessian(s)
    assert np.allclose(hh, hh.T)
    assert thermo.mobility_hat(s) == pytest.approx(0.5 / hh[0, 0])


def test_sigma_hat_hessian_matches_finite_differences():
    s = level_from_slope([0.3, 0.25])
    h = 1e-5
    fd = np.empty((2, 2))
    for i in range(2):
        for j in range(2):
            ei, ej = np.eye(2)[i] * h, np.eye(2)[j] * h
            f = thermo.sigma_hat
            fd[i, j] = (f(s + ei + ej) - f(s + ei - ej) - f(s - ei + ej) + f(s - ei - ej)) / (4 * h * h)
    np.testing.assert_allclose(thermo.sigma_hat_hessian(s), fd, rtol=1e-4, atol=1e-4)


def test_predicted_observables_at_centre():
    p = thermo.predicted_observables([1 / 3, 1 / 3])
    assert p["piX"] == pytest.approx(0.4060, abs=5e-4)
    assert p["orr"] == pytest.approx(0.1453, abs=5e-4)
    assert p["delta"] == pytest.approx(0.2757, abs=5e-4)
    assert p["mobility_first_term"] == pytest.approx(0.1378, abs=5e-4)
    assert p["orr"] + p["piX"] == pytest.approx(2 * p["delta"])


def test_report_is_plain_floats():
    import json

    json.dumps(thermo.thermo_report([0.2, 0.5]))


def test_domain_errors():
    with pytest.raises(ValueError):
        thermo.velocity([0.5, 0.5])
    with pytest.raises(ValueError):
        thermo.sigma_hat([1.2, 0.5])
