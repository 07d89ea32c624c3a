"""Inverse Kasteleyn matrix of the hexagonal dimer model and local edge probabilities.

With weights ``k1, k2, k3`` on the three edge types, the translation-invariant
Gibbs measure is determinantal with kernel

    K^-1(w, b) = (2 pi i)^-2  oint oint  z^(x2 - y2) w^(y1 - x1) / (k3 + k1 z + k2 w)  dz/z dw/w

over the unit torus, where ``(x1, x2)`` are the coordinates of the white
vertex and ``(y1, y2)`` those of the black one.

The main route integrates over ``w`` exactly: for fixed ``z`` the inner
integral is a single residue whose location (inside or outside the unit
circle) switches where ``|k3 + k1 z| = k2``.  What remains is a one-dimensional
integral of a piecewise-analytic function, split at those two angles.  A plain
tensor-product trapezoid rule on the torus is kept as an independent check.
"""
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .geometry import check_slope

# vertex coordinates used for the two-edge event (white/black, as in the usual figure)
W1 = (0, 0)
B1 = (0, -1)
W2 = (-1, 0)
B2 = (0, 0)


class QuadratureError(RuntimeError):
    """Raised when a quadrature route cannot certify its accuracy."""


@dataclass(frozen=True)
class KasteleynWeights:
    k1: float
    k2: float
    k3: float

    def __post_init__(self):
        k = sorted((self.k1, self.k2, self.k3))
        if k[0] <= 0 or k[2] >= k[0] + k[1]:
            raise ValueError(f"weights {self} violate the strict triangle inequality")

    def of_type(self, kind):
        return (self.k1, self.k2, self.k3)[kind - 1]

    def scaled(self, factor):
        return KasteleynWeights(self.k1 * factor, self.k2 * factor, self.k3 * factor)

    def slope(self):
        """Recover the densities: the angles of the triangle with these sides, over pi."""
        k1, k2, k3 = self.k1, self.k2, self.k3
        a1 = np.arccos((k2**2 + k3**2 - k1**2) / (2 * k2 * k3))
        a2 = np.arccos((k1**2 + k3**2 - k2**2) / (2 * k1 * k3))
        return np.array([a1, a2]) / np.pi


@dataclass(frozen=True)
class EdgeSpec:
    """A dimer edge of the given type between a white and a black vertex."""

    kind: int
    white: tuple
    black: tuple

    def __post_init__(self):
        if self.kind not in (1, 2, 3):
            raise ValueError(f"edge type must be 1, 2 or 3, got {self.kind}")


def weights_from_slope(rho):
    rho = check_slope(rho)
    r3 = 1.0 - rho[0] - rho[1]
    return KasteleynWeights(*(float(np.sin(np.pi * r)) for r in (rho[0], rho[1], r3)))


def _exponents(white, black):
    # powers of z and w in the integrand
    (x1, x2), (y1, y2) = white, black
    return x2 - y2, y1 - x1


def _inner_residue(theta, zpow, wpow, wt):
    a = wt.k3 + wt.k1 * np.exp(1j * theta)
    outside = np.abs(a) > wt.k2
    val = np.zeros_like(a)
    if wpow <= 0:
        val = np.where(outside, (1.0 / a) * (-wt.k2 / a) ** (-wpow), val)
    else:
        val = np.where(outside, val, (1.0 / wt.k2) * (-a / wt.k2) ** (wpow - 1))
    return np.exp(1j * zpow * theta) * val


def _break_angle(wt):
    return float(np.arccos((wt.k2**2 - wt.k1**2 - wt.k3**2) / (2 * wt.k1 * wt.k3)))


MAX_OFFSET = 8


def kasteleyn_inverse(white, black, weights, tol=1e-12):
    """``K^-1(w, b)`` by exact inner residue plus adaptive outer quadrature."""
    zpow, wpow = _exponents(white, black)
    if max(abs(zpow), abs(wpow)) > MAX_OFFSET:
        raise ValueError(f"coordinate offsets beyond {MAX_OFFSET} are not supported")
    theta0 = _break_angle(weights)
    real = lambda t: float(np.real(_inner_residue(np.asarray(t), zpow, wpow, weights)))
    total = 0.0
    err = 0.0
    # the integrand is conjugate-symmetric in theta, so integrate the real part on [0, pi]
    for lo, hi in ((0.0, theta0), (theta0, np.pi)):
        val, e = integrate.quad(real, lo, hi, epsabs=tol, epsrel=tol, limit=400)
        total += val
        err += e
    if err > 1e3 * tol:
        raise QuadratureError(f"outer quadrature error estimate {err:.2e} exceeds budget")
    return total / np.pi


def kasteleyn_inverse_trapezoid(white, black, weights, grid=2048, block=256):
    """Tensor-product trapezoid estimate with a half-cell shifted companion grid.

    Returns ``(value, spread)`` where ``spread`` compares the estimate on
    ``grid`` with the one on ``grid // 2``; it is a convergence indicator,
    not a rigorous bound.
    """
    zpow, wpow = _exponents(white, black)

    def trap(m):
        acc = 0.0
        for shift in ((0.5, 0.5), (0.25, 0.75)):
            th = 2 * np.pi * (np.arange(m) + shift[0]) / m
            ph = 2 * np.pi * (np.arange(m) + shift[1]) / m
            w = np.exp(1j * ph)[None, :]
            wp = w**wpow
            s = 0.0
            for start in range(0, m, block):
                z = np.exp(1j * th[start : start + block])[:, None]
                s += np.sum(z**zpow * wp / (weights.k3 + weights.k1 * z + weights.k2 * w)).real
            acc += s / (m * m)
        return acc / 2

    fine = trap(grid)
    coarse = trap(grid // 2)
    return fine, abs(fine - coarse)


def edge_probability(edges, weights, method="residue"):
    """Probability that all listed edges are dimers: ``prod K(e) * det K^-1``."""
    edges = list(edges)
    if not edges:
        return 1.0
    if len(edges) > 4:
        raise ValueError("at most four edges are supported")
    if method == "residue":
        inv = lambda w, b: kasteleyn_inverse(w, b, weights)
    elif method == "trapezoid":
        inv = lambda w, b: kasteleyn_inverse_trapezoid(w, b, weights)[0]
    else:
        raise ValueError(f"unknown method {method!r}")
    mat = np.array([[inv(ei.white, ej.black) for ej in edges] for ei in edges])
    weight = np.prod([weights.of_type(e.kind) for e in edges])
    return float(weight * np.linalg.det(mat))


def x_event_edges():
    """The type-1 and type-2 edges whose joint presence realizes the vertical-edge event."""
    return [EdgeSpec(1, W1, B1), EdgeSpec(2, W2, B2)]


def xi_value(weights, method="residue"):
    """``-(k1 k2 / k3) K^-1(w2, b1)``, which equals the asymmetric speed V."""
    if method == "residue":
        entry = kasteleyn_inverse(W2, B1, weights)
    else:
        entry = kasteleyn_inverse_trapezoid(W2, B1, weights)[0]
    return -weights.k1 * weights.k2 / weights.k3 * entry


def determinantal_report(rho, trapezoid_grid=None):
    """Nearest-edge densities, the Xi entry and the two-edge probability at one slope."""
    wt = weights_from_slope(rho)
    rho = check_slope(rho)
    nearest = {
        "type1": wt.k1 * kasteleyn_inverse(W1, B1, wt),
        "type2": wt.k2 * kasteleyn_inverse(W2, B2, wt),
        "type3": wt.k3 * kasteleyn_inverse(W1, B2, wt),
    }
    out = {
        "weights": [wt.k1, wt.k2, wt.k3],
        "nearest_edge_density": nearest,
        "xi": xi_value(wt),
        "two_edge_probability": 2.0 * edge_probability(x_event_edges(), wt),
        "slope": [float(rho[0]), float(rho[1])],
    }
    if trapezoid_grid:
        val, spread = kasteleyn_inverse_trapezoid(W2, B1, wt, grid=trapezoid_grid)
        out["xi_trapezoid"] = -wt.k1 * wt.k2 / wt.k3 * val
        out["xi_trapezoid_spread"] = wt.k1 * wt.k2 / wt.k3 * spread
    return out
