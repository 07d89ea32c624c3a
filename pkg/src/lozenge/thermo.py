"""Closed-form equilibrium quantities for lozenge tilings.

Everything here is an explicit formula except the log-sine integral, which is
evaluated by adaptive quadrature.  Functions accept a single slope or an array
of slopes with a trailing axis of length two; the ``_raw`` helpers skip domain
checks and are used by the PDE solver on whole grids.
"""
import numpy as np
from scipy import integrate

from .geometry import check_level_slope, check_slope, slope_from_level

PI = np.pi
FD_STEP = 1e-5


def _log_sine_head(theta):
    # int_0^theta ln(2 sin t) dt for 0 <= theta <= pi/2, with the t ln t part exact
    if theta == 0.0:
        return 0.0
    smooth, _ = integrate.quad(
        lambda t: np.log(2.0 * np.sinc(t / PI)), 0.0, theta, epsabs=1e-14, epsrel=1e-13, limit=200
    )
    return theta * np.log(theta) - theta + smooth


def _lobachevsky_scalar(theta):
    if not 0.0 <= theta <= PI:
        raise ValueError(f"theta={theta} outside [0, pi]")
    if theta > PI / 2:
        # ln(2 sin t) is symmetric about pi/2 and integrates to zero over [0, pi]
        return -_log_sine_head(PI - theta)
    return _log_sine_head(theta)


def lobachevsky(theta):
    """``int_0^theta ln(2 sin t) dt`` for ``theta`` in ``[0, pi]``."""
    theta = np.asarray(theta, dtype=float)
    if theta.ndim == 0:
        return _lobachevsky_scalar(float(theta))
    return np.vectorize(_lobachevsky_scalar, otypes=[float])(theta)


def _split(rho):
    rho = np.asarray(rho, dtype=float)
    return rho[..., 0], rho[..., 1]


def surface_tension(rho):
    """Surface tension ``sigma(rho)``; strictly negative inside the triangle."""
    r1, r2 = _split(check_slope(rho))
    return (lobachevsky(PI * r1) + lobachevsky(PI * r2) + lobachevsky(PI * (1.0 - r1 - r2))) / PI


def sigma_gradient(rho):
    r1, r2 = _split(check_slope(rho))
    return _sigma_gradient_raw(r1, r2)


def _sigma_gradient_raw(r1, r2):
    s3 = np.sin(PI * (r1 + r2))
    return np.stack([np.log(np.sin(PI * r1) / s3), np.log(np.sin(PI * r2) / s3)], axis=-1)


def _sigma_hessian_raw(r1, r2):
    c3 = -PI / np.tan(PI * (r1 + r2))  # pi cot(pi rho3)
    h11 = PI / np.tan(PI * r1) + c3
    h22 = PI / np.tan(PI * r2) + c3
    return np.stack([np.stack([h11, c3], axis=-1), np.stack([c3, h22], axis=-1)], axis=-2)


def sigma_hessian(rho):
    """Hessian of the surface tension; its determinant is identically pi**2."""
    r1, r2 = _split(check_slope(rho))
    return _sigma_hessian_raw(r1, r2)


def _velocity_raw(r1, r2):
    return np.sin(PI * r1) * np.sin(PI * r2) / np.sin(PI * (r1 + r2)) / PI


def velocity(rho):
    """Stationary speed of the totally asymmetric dynamics."""
    r1, r2 = _split(check_slope(rho))
    return _velocity_raw(r1, r2)


def mobility(rho):
    r1, r2 = _split(check_slope(rho))
    return 0.5 * _velocity_raw(r1, r2)


def _w_component(a, b):
    # first flux component evaluated at (a, b); the second is the same with arguments swapped
    tot = PI * (a + b)
    return (
        -np.cos(tot) / np.sin(tot) * np.sin(PI * b) ** 2 / (2 * PI)
        - b / 4.0
        + np.sin(2 * PI * b) / (4 * PI)
    )


def _flux_w_raw(r1, r2):
    return np.stack([_w_component(r1, r2), _w_component(r2, r1)], axis=-1)


def flux_W(rho):
    """Divergence-form flux: the PDE reads ``d_t psi = div W(grad psi)``."""
    r1, r2 = _split(check_slope(rho))
    return _flux_w_raw(r1, r2)


def _w_jacobian_raw(r1, r2):
    tot = PI * (r1 + r2)
    inv_sin2 = 1.0 / np.sin(tot) ** 2
    cot = np.cos(tot) / np.sin(tot)

    def cross(a):
        # d W_i / d rho_j for i != j, expressed through the partner's density a
        return 0.5 * np.sin(PI * a) ** 2 * inv_sin2 - 0.5 * cot * np.sin(2 * PI * a) - 0.25 + 0.5 * np.cos(2 * PI * a)

    j11 = 0.5 * np.sin(PI * r2) ** 2 * inv_sin2
    j22 = 0.5 * np.sin(PI * r1) ** 2 * inv_sin2
    j12 = cross(r2)
    j21 = cross(r1)
    return np.stack([np.stack([j11, j12], axis=-1), np.stack([j21, j22], axis=-1)], axis=-2)


def flux_W_jacobian(rho):
    """Jacobian ``d W_i / d rho_j`` (not symmetric away from the diagonal rho1 = rho2)."""
    r1, r2 = _split(check_slope(rho))
    return _w_jacobian_raw(r1, r2)


def curl_W(rho):
    jac = flux_W_jacobian(rho)
    return jac[..., 1, 0] - jac[..., 0, 1]


def hw_spectrum(rho):
    """Trace and determinant of the flux Jacobian in closed form."""
    r1, r2 = _split(check_slope(rho))
    tot = r1 + r2
    st = np.sin(PI * tot)
    trace = 0.5 * (np.sin(PI * r1) ** 2 + np.sin(PI * r2) ** 2) / st**2
    det = (
        5 * st + np.sin(3 * PI * tot) - 2 * np.sin(PI * (3 * r1 + r2)) - 2 * np.sin(PI * (r1 + 3 * r2))
    ) / (64 * st**3)
    return trace, det


def _rho_of_s(s1, s2):
    d = 2.0 + s2
    return (1.0 - s1) / d, (1.0 + s1) / d


def sigma_hat(s):
    """Surface tension in level-set variables, ``(1 + s2/2) sigma(rho(s))``."""
    s = check_level_slope(s)
    rho = slope_from_level(s)
    return (1.0 + 0.5 * s[..., 1]) * surface_tension(rho)


def _sigma_hat_hessian_raw(s1, s2):
    d = 2.0 + s2
    r1, r2 = _rho_of_s(s1, s2)
    grad = _sigma_gradient_raw(r1, r2)
    hess = _sigma_hessian_raw(r1, r2)
    jac = np.stack(
        [np.stack([-1.0 / d, -r1 / d], axis=-1), np.stack([1.0 / d, -r2 / d], axis=-1)], axis=-2
    )
    d2 = 1.0 / d**2
    zero = np.zeros_like(d)
    second_r1 = np.stack([np.stack([zero, d2], -1), np.stack([d2, 2 * r1 * d2], -1)], -2)
    second_r2 = np.stack([np.stack([zero, -d2], -1), np.stack([-d2, 2 * r2 * d2], -1)], -2)
    chain = np.einsum("...ki,...kl,...lj->...ij", jac, hess, jac)
    chain = chain + grad[..., 0, None, None] * second_r1 + grad[..., 1, None, None] * second_r2
    pulled = np.einsum("...ki,...k->...i", jac, grad)  # gradient of sigma(rho(s))
    weight = 0.5 * d
    out = weight[..., None, None] * chain
    # derivative of the prefactor (1 + s2/2) only acts in the s2 direction
    out[..., 1, :] += 0.5 * pulled
    out[..., :, 1] += 0.5 * pulled
    return out


def sigma_hat_hessian(s):
    s = check_level_slope(s)
    return _sigma_hat_hessian_raw(s[..., 0], s[..., 1])


def _g_raw(s1, s2):
    r1, r2 = _rho_of_s(s1, s2)
    return (1.0 + 0.5 * s2) * (r1 * r2 - (r1 + r2) * _velocity_raw(r1, r2))


def g_function(s):
    """Second component of the level-set flux, ``(1 + s2/2)[rho1 rho2 - (rho1 + rho2) V]``."""
    s = check_level_slope(s)
    return _g_raw(s[..., 0], s[..., 1])


def _g_gradient_raw(s1, s2):
    # closed form of grad G through the sigma-hat Hessian
    hh = _sigma_hat_hessian_raw(s1, s2)
    return np.stack([hh[..., 0, 1] / hh[..., 0, 0], 0.5 * hh[..., 1, 1] / hh[..., 0, 0]], axis=-1)


def g_gradient(s):
    s = check_level_slope(s)
    return _g_gradient_raw(s[..., 0], s[..., 1])


def mobility_hat(s):
    """Level-set mobility ``1 / (2 sigma_hat_11)``."""
    return 0.5 / sigma_hat_hessian(s)[..., 0, 0]


def _central(f, x, axis, step):
    e = np.zeros(2)
    e[axis] = step
    return (f(x + e) - f(x - e)) / (2 * step)


def _level_ratio_field(s):
    hh = _sigma_hat_hessian_raw(s[0], s[1])
    return np.array([hh[0, 1] / hh[0, 0], 0.5 * hh[1, 1] / hh[0, 0]])


def _slope_ratio_field(rho):
    hh = _sigma_hessian_raw(rho[0], rho[1])
    return np.array([hh[0, 1] / hh[0, 0], 0.5 * hh[1, 1] / hh[0, 0]])


def identity_residuals(s, step=FD_STEP):
    """Residuals of the algebraic identities linking G, sigma-hat and sigma.

    ``dG_ds1`` and ``dG_ds2`` compare finite differences of G with ratios of
    the sigma-hat Hessian; ``curl_hat`` and ``curl_rho`` are finite-difference
    curls of the two gradient-like fields; ``curl_W`` is the (generally
    nonzero) curl of the divergence-form flux at ``rho(s)``.
    """
    s = np.asarray(check_level_slope(s), dtype=float)
    rho = slope_from_level(s)
    g = lambda x: float(_g_raw(x[0], x[1]))
    hh = _sigma_hat_hessian_raw(s[0], s[1])
    res_1 = abs(_central(g, s, 0, step) - hh[0, 1] / hh[0, 0])
    res_2 = abs(_central(g, s, 1, step) - 0.5 * hh[1, 1] / hh[0, 0])
    curl_hat = _central(_level_ratio_field, s, 0, step)[1] - _central(_level_ratio_field, s, 1, step)[0]
    curl_rho = _central(_slope_ratio_field, rho, 0, step)[1] - _central(_slope_ratio_field, rho, 1, step)[0]
    return {
        "dG_ds1": float(res_1),
        "dG_ds2": float(res_2),
        "curl_hat": float(abs(curl_hat)),
        "curl_rho": float(abs(curl_rho)),
        "curl_W": float(curl_W(rho)),
    }


def predicted_observables(rho):
    """Closed-form equilibrium averages used as Monte Carlo targets."""
    r1, r2 = _split(check_slope(rho))
    v = _velocity_raw(r1, r2)
    r3 = 1.0 - r1 - r2
    return {
        "piX": 2.0 * (r1 * r2 + r3 * v),
        "orr": 2.0 * (-r1 * r2 + (r1 + r2) * v),
        "delta": v,
        "mobility_first_term": 0.5 * v,
    }


def thermo_report(rho):
    """Every named quantity and identity residual at one slope, as plain floats."""
    rho = check_slope(rho)
    from .geometry import level_from_slope

    s = level_from_slope(rho)
    hess = sigma_hessian(rho)
    trace, det = hw_spectrum(rho)
    jac = flux_W_jacobian(rho)
    mu = mobility(rho)
    sym = 0.5 * (jac + jac.T)
    w = flux_W(rho)
    residuals = identity_residuals(s)
    return {
        "slope": [float(rho[0]), float(rho[1])],
        "level_slope": [float(s[0]), float(s[1])],
        "quantities": {
            "sigma": float(surface_tension(rho)),
            "sigma_hessian": hess.tolist(),
            "velocity": float(velocity(rho)),
            "mobility": float(mu),
            "flux_W": w.tolist(),
            "hw_trace": float(trace),
            "hw_det": float(det),
            "sigma_hat": float(sigma_hat(s)),
            "g": float(g_function(s)),
            "mobility_hat": float(mobility_hat(s)),
            "predicted": {k: float(v) for k, v in predicted_observables(rho).items()},
        },
        "residuals": {
            "det_hessian_minus_pi2": float(abs(np.linalg.det(hess) - PI**2)),
            "mobility_minus_half_velocity": float(abs(mu - 0.5 * velocity(rho))),
            "w_symmetry": float(abs(w[1] - _w_component(rho[1], rho[0]))),
            "w_jacobian_sym_minus_mu_hessian": float(np.max(np.abs(sym - mu * hess))),
            "hw_trace_vs_jacobian": float(abs(trace - np.trace(jac))),
            "hw_det_vs_jacobian": float(abs(det - np.linalg.det(jac))),
            "mobility_ratio": float(abs(mu / mobility_hat(s) - (rho[0] + rho[1]) / 4)),
            "dG_ds1": residuals["dG_ds1"],
            "dG_ds2": residuals["dG_ds2"],
            "curl_hat": residuals["curl_hat"],
            "curl_rho": residuals["curl_rho"],
        },
        "curl_W": residuals["curl_W"],
    }
