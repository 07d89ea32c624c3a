"""Coordinates on the two projection planes and the maps between slopes.

A tilt of the stepped surface is described either by the lozenge densities
``rho = (rho1, rho2)`` (with ``rho3 = 1 - rho1 - rho2``), living in the open
triangle, or by the gradient ``s = (s1, s2)`` of the level-set
parametrization, living in ``(-1, 1) x (0, inf)``.

Lattice vertices are integer pairs ``u = (u1, u2)`` in the basis ``e1, e2``.
The column of a vertex is ``u1 - u2`` and its doubled vertical position is
``u1 + u2``; doubling keeps half-integer positions exact.
"""
import numpy as np

SLOPE_MARGIN = 1e-9


def rho3(rho):
    rho = np.asarray(rho, dtype=float)
    return 1.0 - rho[..., 0] - rho[..., 1]


def in_triangle(rho, margin=SLOPE_MARGIN):
    """Boolean mask: slope strictly inside the triangle by ``margin``."""
    rho = np.asarray(rho, dtype=float)
    r1, r2 = rho[..., 0], rho[..., 1]
    return (r1 > margin) & (r2 > margin) & (1.0 - r1 - r2 > margin)


def in_level_domain(s, margin=SLOPE_MARGIN):
    s = np.asarray(s, dtype=float)
    return (np.abs(s[..., 0]) < 1.0 - margin) & (s[..., 1] > margin) & np.isfinite(s[..., 1])


def check_slope(rho, margin=SLOPE_MARGIN):
    """Return ``rho`` as a float array, raising ``ValueError`` off the open triangle."""
    arr = np.asarray(rho, dtype=float)
    if arr.shape[-1:] != (2,):
        raise ValueError(f"slope must have two components, got shape {arr.shape}")
    if not np.all(in_triangle(arr, margin)):
        raise ValueError(f"slope {rho!r} is not inside the open triangle (margin {margin})")
    return arr


def check_level_slope(s, margin=SLOPE_MARGIN):
    arr = np.asarray(s, dtype=float)
    if arr.shape[-1:] != (2,):
        raise ValueError(f"level slope must have two components, got shape {arr.shape}")
    if not np.all(in_level_domain(arr, margin)):
        raise ValueError(f"level slope {s!r} is outside (-1, 1) x (0, inf)")
    return arr


def slope_from_level(s):
    """Lozenge densities ``(rho1, rho2)`` for a level-set gradient ``s``."""
    s = check_level_slope(s)
    s1, s2 = s[..., 0], s[..., 1]
    return np.stack([(1.0 - s1) / (2.0 + s2), (1.0 + s1) / (2.0 + s2)], axis=-1)


def level_from_slope(rho):
    """Level-set gradient ``(s1, s2)`` for lozenge densities ``rho``."""
    rho = check_slope(rho)
    r1, r2 = rho[..., 0], rho[..., 1]
    tot = r1 + r2
    return np.stack([(r2 - r1) / tot, 2.0 * (1.0 - tot) / tot], axis=-1)


def area_jacobian(rho):
    """Area factor ``du/dv = 1 / (rho1 + rho2)`` between the two parametrizations."""
    rho = check_slope(rho)
    return 1.0 / (rho[..., 0] + rho[..., 1])


def surface_u_to_v(u1, u2, psi):
    """Map a surface point given in height coordinates to level-set coordinates.

    Returns ``(v1, v2, psi_hat)`` with ``v1 = u2 - u1``, ``v2 = -psi`` and
    ``psi_hat = 2 psi - (u1 + u2)``.
    """
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    psi = np.asarray(psi, dtype=float)
    return u2 - u1, -psi, 2.0 * psi - (u1 + u2)


def vertex_column(u1, u2):
    return np.asarray(u1) - np.asarray(u2)


def vertex_doubled_position(u1, u2):
    return np.asarray(u1) + np.asarray(u2)


def vertex_from_column(c, m):
    """Inverse of ``(column, doubled position)``; requires ``m = c (mod 2)``."""
    c = np.asarray(c)
    m = np.asarray(m)
    if np.any((m - c) % 2):
        raise ValueError("doubled position and column must have equal parity")
    return (m + c) // 2, (m - c) // 2
