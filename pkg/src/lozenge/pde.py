"""Explicit finite-volume solver for the two forms of the hydrodynamic equation.

Both systems read ``d_t f = div F(grad f)`` with a monotone flux:

* u-system (heights): ``F = W``, gradients in the slope triangle;
* v-system (level sets): ``F(s) = (s1 / 2, G(s))``, gradients in
  ``(-1, 1) x (0, inf)``.

Nodes sit on a parallelogram lattice ``x = origin + xi a + eta b``.  Each
lattice cell is split into two triangles on which the gradient of the
piecewise-linear interpolant is exact, and the update is

    d_t f = -D^T F(D f)

with ``D`` the triangle-gradient operator and ``D^T`` its adjoint for the
lumped node measure.  Three properties follow exactly, before any time
discretization: the squared L2 distance of two solutions with equal boundary
data decays at rate ``2 <D e, F(D f1) - F(D f2)> >= 0`` (monotonicity), the
sum of nodal values is conserved on periodic grids (``D 1 = 0``), and affine
data are stationary (``D^T`` annihilates constant fluxes).

Periodic grids store the periodic part only; the mean gradient ``slope`` is
added inside ``D``.
"""
from dataclasses import dataclass, field, replace

import numpy as np

from . import thermo
from .geometry import level_from_slope

CLAMP_EPS = 1e-3
SAFETY = 0.25


class SlopeExcursion(FloatingPointError):
    """Gradients left the admissible region and step halving did not help."""


@dataclass
class PdeGrid:
    """Nodal values on a parallelogram lattice.

    ``values[i, j]`` lives at ``origin + (i / n_xi) a + (j / n_eta) b`` for
    periodic grids and at ``origin + (i / (n_xi - 1)) a + ...`` (boundary
    included) for Dirichlet grids.
    """

    system: str
    values: np.ndarray
    a: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0]))
    b: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0]))
    origin: np.ndarray = field(default_factory=lambda: np.zeros(2))
    periodic: bool = True
    slope: np.ndarray = field(default_factory=lambda: np.zeros(2))
    eps_clamp: float = CLAMP_EPS

    def __post_init__(self):
        if self.system not in ("u", "v"):
            raise ValueError("system must be 'u' or 'v'")
        self.values = np.asarray(self.values, dtype=float)
        self.a = np.asarray(self.a, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        self.origin = np.asarray(self.origin, dtype=float)
        self.slope = np.asarray(self.slope, dtype=float)
        if not self.periodic and np.any(self.slope):
            raise ValueError("Dirichlet grids carry full values, not a linear part")

    @property
    def shape(self):
        return self.values.shape

    @property
    def spacing(self):
        """Number of lattice steps per frame vector ``(n_xi, n_eta)``."""
        nx, ny = self.shape
        return (nx, ny) if self.periodic else (nx - 1, ny - 1)

    @property
    def h(self):
        nx, ny = self.spacing
        return max(np.linalg.norm(self.a) / nx, np.linalg.norm(self.b) / ny)

    @property
    def frame(self):
        return np.column_stack([self.a, self.b])

    def nodes(self):
        """Physical node coordinates, shape ``(n_xi, n_eta, 2)``."""
        nx, ny = self.spacing
        i = np.arange(self.shape[0])[:, None, None] / nx
        j = np.arange(self.shape[1])[None, :, None] / ny
        return self.origin + i * self.a + j * self.b

    def full_values(self):
        """Values including the linear part."""
        if not self.periodic:
            return self.values.copy()
        x = self.nodes() - self.origin
        return self.values + x @ self.slope

    def node_area(self):
        nx, ny = self.spacing
        return abs(np.linalg.det(self.frame)) / (nx * ny)

    def boundary_mask(self):
        mask = np.zeros(self.shape, dtype=bool)
        if not self.periodic:
            mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = True
        return mask

    def volume(self):
        """Integral of the stored values (trapezoid weights on Dirichlet grids)."""
        w = np.ones(self.shape)
        if not self.periodic:
            w[0, :] *= 0.5
            w[-1, :] *= 0.5
            w[:, 0] *= 0.5
            w[:, -1] *= 0.5
        return float(np.sum(w * self.values) * self.node_area())

    def copy(self, values=None):
        return replace(self, values=self.values.copy() if values is None else np.asarray(values, dtype=float))


# grid builders ----------------------------------------------------------------------------


def u_torus(n, rho_bar, perturbation=None):
    """Unit u-torus with mean slope ``rho_bar``; ``perturbation(u1, u2)`` must be 1-periodic."""
    g = PdeGrid("u", np.zeros((n, n)), slope=np.asarray(rho_bar, dtype=float))
    if perturbation is not None:
        x = g.nodes()
        g.values = np.asarray(perturbation(x[..., 0], x[..., 1]), dtype=float)
    return g


def v_torus_frame(rho_bar):
    """Frame vectors of the level-set torus induced by the unit u-torus at slope ``rho_bar``."""
    r1, r2 = float(rho_bar[0]), float(rho_bar[1])
    return np.array([1.0, r1]), np.array([0.0, r1 + r2])


def v_torus(n, rho_bar, perturbation=None, n_eta=None):
    """Level-set torus matching the unit u-torus, with linear part ``level_from_slope(rho_bar)``."""
    a, b = v_torus_frame(rho_bar)
    g = PdeGrid("v", np.zeros((n, n_eta or n)), a=a, b=b, slope=level_from_slope(rho_bar))
    if perturbation is not None:
        x = g.nodes()
        g.values = np.asarray(perturbation(x[..., 0], x[..., 1]), dtype=float)
    return g


def rectangle_torus(system, n, slope, perturbation=None, n_eta=None):
    """Axis-aligned unit torus in either system."""
    g = PdeGrid(system, np.zeros((n, n_eta or n)), slope=np.asarray(slope, dtype=float))
    if perturbation is not None:
        x = g.nodes()
        g.values = np.asarray(perturbation(x[..., 0], x[..., 1]), dtype=float)
    return g


def dirichlet_square(system, n, profile):
    """Unit square with ``(n + 1)^2`` nodes; boundary values stay at ``profile``."""
    g = PdeGrid(system, np.zeros((n + 1, n + 1)), periodic=False)
    x = g.nodes()
    g.values = np.asarray(profile(x[..., 0], x[..., 1]), dtype=float)
    return g


# discrete operators -----------------------------------------------------------------------


def _shift(f, di, dj, periodic):
    if periodic:
        return np.roll(f, (-di, -dj), axis=(0, 1))
    return f[di:f.shape[0] - 1 + di, dj:f.shape[1] - 1 + dj]


def lattice_gradients(grid, values=None):
    """Frame-coordinate gradients ``(g_lower, g_upper)``, each ``(cells, 2)`` shaped ``(..., 2)``."""
    f = grid.values if values is None else values
    nx, ny = grid.spacing
    per = grid.periodic
    f00 = _shift(f, 0, 0, per)
    f10 = _shift(f, 1, 0, per)
    f01 = _shift(f, 0, 1, per)
    f11 = _shift(f, 1, 1, per)
    lower = np.stack([(f10 - f00) * nx, (f01 - f00) * ny], axis=-1)
    upper = np.stack([(f11 - f01) * nx, (f11 - f10) * ny], axis=-1)
    if per:
        # linear part expressed in frame coordinates: d/dxi = a . slope, d/deta = b . slope
        lin = np.array([grid.a @ grid.slope, grid.b @ grid.slope])
        lower = lower + lin
        upper = upper + lin
    return lower, upper


def physical_gradients(grid, values=None):
    lower, upper = lattice_gradients(grid, values)
    minv_t = np.linalg.inv(grid.frame).T
    return lower @ minv_t.T, upper @ minv_t.T


def divergence(grid, phi_lower, phi_upper):
    """``-D^T`` applied to frame-coordinate fluxes ``M^-1 F``: the nodal rate of change."""
    nx, ny = grid.spacing
    out = np.zeros(grid.shape)
    lx, ly = 0.5 * nx * phi_lower[..., 0], 0.5 * ny * phi_lower[..., 1]
    ux, uy = 0.5 * nx * phi_upper[..., 0], 0.5 * ny * phi_upper[..., 1]
    if grid.periodic:
        out += lx + ly
        out -= np.roll(lx, (1, 0), axis=(0, 1))
        out -= np.roll(ly, (0, 1), axis=(0, 1))
        out -= np.roll(ux + uy, (1, 1), axis=(0, 1))
        out += np.roll(ux, (0, 1), axis=(0, 1))
        out += np.roll(uy, (1, 0), axis=(0, 1))
    else:
        out[:-1, :-1] += lx + ly
        out[1:, :-1] -= lx
        out[:-1, 1:] -= ly
        out[1:, 1:] -= ux + uy
        out[:-1, 1:] += ux
        out[1:, :-1] += uy
    return out


def admissible(system, g, eps):
    if system == "u":
        return (g[..., 0] >= eps) & (g[..., 1] >= eps) & (g[..., 0] + g[..., 1] <= 1.0 - eps)
    return (np.abs(g[..., 0]) <= 1.0 - eps) & (g[..., 1] >= eps) & (g[..., 1] <= 1.0 / eps)


def clamp(system, g, eps):
    """Project gradients into the shrunken admissible set; returns ``(clamped, excursion)``."""
    g = np.array(g, dtype=float)
    if system == "u":
        out = np.clip(g, eps, None)
        over = out[..., 0] + out[..., 1] - (1.0 - eps)
        shift = np.where(over > 0, over / 2.0, 0.0)
        out = out - shift[..., None]
        out = np.clip(out, eps, None)
        over = out[..., 0] + out[..., 1] - (1.0 - eps)
        out = np.where((over > 0)[..., None], out * (1.0 - eps) / (out[..., 0] + out[..., 1])[..., None], out)
    else:
        out = np.stack([np.clip(g[..., 0], -1.0 + eps, 1.0 - eps), np.clip(g[..., 1], eps, 1.0 / eps)], axis=-1)
    return out, float(np.max(np.abs(out - g), initial=0.0))


def flux(system, g):
    if system == "u":
        return thermo._flux_w_raw(g[..., 0], g[..., 1])
    return np.stack([0.5 * g[..., 0], thermo._g_raw(g[..., 0], g[..., 1])], axis=-1)


def flux_jacobian(system, g):
    if system == "u":
        return thermo._w_jacobian_raw(g[..., 0], g[..., 1])
    dg = thermo._g_gradient_raw(g[..., 0], g[..., 1])
    half = np.full(g.shape[:-1], 0.5)
    zero = np.zeros(g.shape[:-1])
    return np.stack([np.stack([half, zero], -1), dg], -2)


def _rate_from_gradients(grid, lower, upper):
    lower, ex1 = clamp(grid.system, lower, grid.eps_clamp)
    upper, ex2 = clamp(grid.system, upper, grid.eps_clamp)
    minv = np.linalg.inv(grid.frame)
    out = divergence(grid, flux(grid.system, lower) @ minv.T, flux(grid.system, upper) @ minv.T)
    out[grid.boundary_mask()] = 0.0
    return out, max(ex1, ex2)


def rhs(grid, values=None):
    """Nodal time derivative and the clamp excursion of the gradients used."""
    return _rate_from_gradients(grid, *physical_gradients(grid, values))


def boundary_flux(grid, values=None):
    """Discrete outward flux: the rate at which interior volume changes, from the boundary rows.

    On Dirichlet grids the interior volume changes only through triangles
    touching the boundary; this returns ``d/dt`` of the interior volume.
    Zero for periodic grids.
    """
    if grid.periodic:
        return 0.0
    lower, upper = physical_gradients(grid, values)
    lower, _ = clamp(grid.system, lower, grid.eps_clamp)
    upper, _ = clamp(grid.system, upper, grid.eps_clamp)
    minv = np.linalg.inv(grid.frame)
    full = divergence(grid, flux(grid.system, lower) @ minv.T, flux(grid.system, upper) @ minv.T)
    # sum of the full divergence over all nodes vanishes; the interior gets minus the boundary share
    return float(-np.sum(full[grid.boundary_mask()]) * grid.node_area())


def continuum_boundary_flux(grid, values=None):
    """Midpoint-rule ``int_{boundary} F . n`` using the adjacent triangle's gradient (axis-aligned frames)."""
    if grid.periodic:
        return 0.0
    lower, upper = physical_gradients(grid, values)
    lower, _ = clamp(grid.system, lower, grid.eps_clamp)
    upper, _ = clamp(grid.system, upper, grid.eps_clamp)
    fl = flux(grid.system, lower)
    fu = flux(grid.system, upper)
    nx, ny = grid.spacing
    la, lb = np.linalg.norm(grid.a), np.linalg.norm(grid.b)
    # edges: eta=0 uses lower triangles, xi=0 lower, xi=1 upper, eta=1 upper
    tot = -np.sum(fl[:, 0, 1]) * la / nx - np.sum(fl[0, :, 0]) * lb / ny
    tot += np.sum(fu[-1, :, 0]) * lb / ny + np.sum(fu[:, -1, 1]) * la / nx
    return float(tot)


# time stepping --------------------------------------------------------------------------------


_DD_CACHE = {}


def operator_norm(grid, iters=60):
    """Largest eigenvalue of ``D^T D`` (power iteration, cached per lattice)."""
    key = (grid.shape, grid.periodic, tuple(grid.a), tuple(grid.b))
    if key in _DD_CACHE:
        return _DD_CACHE[key]
    rng = np.random.default_rng(0)
    probe = grid.copy(rng.standard_normal(grid.shape))
    if probe.periodic:
        probe.slope = np.zeros(2)
    mask = grid.boundary_mask()
    lam = 0.0
    minv = np.linalg.inv(grid.frame)
    for _ in range(iters):
        probe.values[mask] = 0.0
        lo, up = physical_gradients(probe)
        y = divergence(probe, lo @ minv.T, up @ minv.T)
        y[mask] = 0.0
        lam = float(np.linalg.norm(y) / max(np.linalg.norm(probe.values), 1e-300))
        probe.values = y / max(np.linalg.norm(y), 1e-300)
    _DD_CACHE[key] = 1.05 * lam
    return _DD_CACHE[key]


def _jacobian_bounds(jac):
    # closed forms for 2x2 matrices: trace, smallest eigenvalue of the symmetric part, squared spectral norm
    p, q, r, t = jac[..., 0, 0], jac[..., 0, 1], jac[..., 1, 0], jac[..., 1, 1]
    tr = p + t
    lam_min = 0.5 * tr - np.sqrt(0.25 * (p - t) ** 2 + 0.25 * (q + r) ** 2)
    fro2 = p * p + q * q + r * r + t * t
    det = p * t - q * r
    norm2 = 0.5 * (fro2 + np.sqrt(np.maximum(fro2 * fro2 - 4.0 * det * det, 0.0)))
    return tr, lam_min, norm2


def _dt_from_gradients(grid, lower, upper, safety):
    g = np.concatenate([lower.reshape(-1, 2), upper.reshape(-1, 2)])
    g, _ = clamp(grid.system, g, grid.eps_clamp)
    tr, lam_min, norm2 = _jacobian_bounds(flux_jacobian(grid.system, g))
    rho = operator_norm(grid)
    dt_cfl = safety * 2.0 / (rho * float(np.max(tr)))
    dt_contract = float(np.min(np.maximum(lam_min, 1e-12) / norm2)) / rho
    return min(dt_cfl, dt_contract)


def stable_dt(grid, values=None, safety=SAFETY):
    """Explicit Euler step from the flux Jacobians over the occurring gradients.

    ``safety * 2 / (lambda_max(D^T D) * max trace J)`` as the CFL bound, capped
    so that each step is an L2 contraction for the linearized flux:
    ``dt <= lambda_min(sym J) / (lambda_max(D^T D) ||J||^2)``.
    """
    return _dt_from_gradients(grid, *physical_gradients(grid, values), safety)


@dataclass
class Trajectory:
    grid: PdeGrid
    times: list
    snapshots: list
    step_times: list = field(default_factory=list)
    step_volumes: list = field(default_factory=list)
    step_boundary_flux: list = field(default_factory=list)
    step_excursion: list = field(default_factory=list)
    step_pair_l2: list = field(default_factory=list)
    rejected_steps: int = 0

    def final(self):
        return self.grid.copy(self.snapshots[-1])


def _record(trajs, grids, cur, t, exc):
    for tr, g, v in zip(trajs, grids, cur):
        tr.step_times.append(t)
        tr.step_volumes.append(g.copy(v).volume())
        tr.step_boundary_flux.append(boundary_flux(g, v))
        tr.step_excursion.append(exc)
    if len(grids) == 2:
        trajs[0].step_pair_l2.append(l2_distance(grids[0], cur[0], cur[1]))


def _advance(grids, t_end, outputs, safety, max_halvings=12, dt_every=10):
    """Step several same-lattice grids with a common ``dt``; returns trajectories.

    The step size is re-derived from the current gradients every ``dt_every``
    steps and whenever a step had to be halved.
    """
    outputs = sorted(set([0.0] + [float(x) for x in outputs if 0.0 < x <= t_end] + [float(t_end)]))
    trajs = [Trajectory(g, [0.0], [g.values.copy()]) for g in grids]
    cur = [g.values.copy() for g in grids]
    grads = [physical_gradients(g, v) for g, v in zip(grids, cur)]
    for g, (lo, up) in zip(grids, grads):
        if not (admissible(g.system, lo, g.eps_clamp).all() and admissible(g.system, up, g.eps_clamp).all()):
            raise SlopeExcursion("initial gradients outside the admissible region")
    _record(trajs, grids, cur, 0.0, 0.0)
    t = 0.0
    k_out = 1
    steps = 0
    dt_base = None
    while k_out < len(outputs):
        if dt_base is None or steps % dt_every == 0:
            dt_base = min(_dt_from_gradients(g, lo, up, safety) for g, (lo, up) in zip(grids, grads))
        rates, exc = [], 0.0
        for g, (lo, up) in zip(grids, grads):
            r, e = _rate_from_gradients(g, lo, up)
            rates.append(r)
            exc = max(exc, e)
        dt = min(dt_base, outputs[k_out] - t)
        for _ in range(max_halvings + 1):
            new = [v + dt * r for v, r in zip(cur, rates)]
            new_grads = [physical_gradients(g, v) for g, v in zip(grids, new)]
            if all(admissible(g.system, x, g.eps_clamp).all() for g, gr in zip(grids, new_grads) for x in gr):
                break
            for tr in trajs:
                tr.rejected_steps += 1
            dt *= 0.5
            dt_base = dt
        else:
            raise SlopeExcursion(f"gradients leave the admissible region at t={t:.4g}")
        t = t + dt if dt < outputs[k_out] - t else outputs[k_out]
        cur, grads = new, new_grads
        steps += 1
        _record(trajs, grids, cur, t, exc)
        if t >= outputs[k_out]:
            for tr, v in zip(trajs, cur):
                tr.times.append(t)
                tr.snapshots.append(v.copy())
            k_out += 1
    return trajs


def solve(grid, t_end, outputs=(), safety=SAFETY):
    if t_end < 0:
        raise ValueError("t_end must be non-negative")
    return _advance([grid], t_end, outputs, safety)[0]


def solve_u(grid, t_end, outputs=(), safety=SAFETY):
    """Evolve heights under ``d_t psi = div W(grad psi)``."""
    if grid.system != "u":
        raise ValueError("solve_u needs a u-system grid")
    return solve(grid, t_end, outputs, safety)


def solve_v(grid, t_end, outputs=(), safety=SAFETY):
    """Evolve level sets under ``d_t psi_hat = div(d_1 psi_hat / 2, G(grad psi_hat))``."""
    if grid.system != "v":
        raise ValueError("solve_v needs a v-system grid")
    return solve(grid, t_end, outputs, safety)


def solve_pair(grid1, grid2, t_end, outputs=(), safety=SAFETY):
    """Evolve two grids on the same lattice with a shared step sequence."""
    if grid1.shape != grid2.shape or grid1.system != grid2.system or grid1.periodic != grid2.periodic:
        raise ValueError("paired solutions need identical grids")
    return tuple(_advance([grid1, grid2], t_end, outputs, safety))


def solve_ensemble(grids, t_end, outputs=(), safety=SAFETY):
    return _advance(list(grids), t_end, outputs, safety)


@dataclass
class PdeDiagnostics:
    times: np.ndarray
    volume: np.ndarray
    volume_rate: np.ndarray
    boundary_flux: np.ndarray
    max_excursion: float
    l2_distance: np.ndarray = None
    volume_difference: np.ndarray = None

    def to_dict(self):
        out = {
            "times": self.times.tolist(),
            "volume": self.volume.tolist(),
            "volume_rate": self.volume_rate.tolist(),
            "boundary_flux": self.boundary_flux.tolist(),
            "max_excursion": self.max_excursion,
        }
        if self.l2_distance is not None:
            out["l2_distance"] = self.l2_distance.tolist()
            out["volume_difference"] = self.volume_difference.tolist()
        return out


def l2_distance(grid, f1, f2):
    return float(np.sqrt(np.sum((f1 - f2) ** 2) * grid.node_area()))


def diagnostics(traj, paired=None):
    """Per-step volume, its rate, the discrete boundary flux and (for pairs) L2 distances.

    Paired trajectories must come from ``solve_pair`` so that steps coincide.
    """
    t = np.array(traj.step_times)
    vol = np.array(traj.step_volumes)
    rate = np.diff(vol) / np.diff(t) if len(t) > 1 else np.zeros(0)
    out = PdeDiagnostics(t, vol, rate, np.array(traj.step_boundary_flux), float(max(traj.step_excursion)))
    if paired is not None:
        if paired.grid.shape != traj.grid.shape or len(paired.step_times) != len(traj.step_times):
            raise ValueError("paired trajectory does not share the step sequence")
        out.volume_difference = vol - np.array(paired.step_volumes)
        out.l2_distance = np.array(traj.step_pair_l2 or paired.step_pair_l2)
    return out


def paired_l2_series(traj1, traj2):
    """L2 distance at every recorded output time."""
    if not np.allclose(traj1.times, traj2.times):
        raise ValueError("trajectories have different output times")
    return np.array([l2_distance(traj1.grid, a, b) for a, b in zip(traj1.snapshots, traj2.snapshots)])


def linear_decay_rate(rho, k=(1.0, 0.0)):
    """Decay rate of ``sin(2 pi k.u)`` for the equation linearized at slope ``rho``."""
    k = np.asarray(k, dtype=float)
    jac = thermo.flux_W_jacobian(rho)
    return float(4 * np.pi**2 * k @ jac @ k)


def mode_amplitude(grid, values, k=(1, 0)):
    """Projection of periodic ``values`` onto ``sin(2 pi (k1 xi + k2 eta))``."""
    nx, ny = grid.shape
    xi = np.arange(nx)[:, None] / nx
    eta = np.arange(ny)[None, :] / ny
    basis = np.sin(2 * np.pi * (k[0] * xi + k[1] * eta))
    return float(np.sum(values * basis) / np.sum(basis * basis))


# change of parametrization ----------------------------------------------------------------------


def interpolate(grid, points, values=None, order=3):
    """Evaluate a periodic grid's full field (linear part included) at physical ``points``."""
    from scipy.ndimage import map_coordinates

    if not grid.periodic:
        raise ValueError("interpolation is implemented for periodic grids")
    f = grid.values if values is None else values
    pts = np.asarray(points, dtype=float)
    rel = pts - grid.origin
    frame_xy = rel @ np.linalg.inv(grid.frame).T
    nx, ny = grid.shape
    idx = np.stack([frame_xy[..., 0] * nx, frame_xy[..., 1] * ny]).reshape(2, -1)
    per = map_coordinates(f, idx, order=order, mode="grid-wrap").reshape(pts.shape[:-1])
    return per + rel @ grid.slope


def u_to_v_values(u_grid, v_grid, u_values=None, iters=60):
    """Periodic part of the level-set field of a u-surface, sampled on ``v_grid``'s nodes.

    For each node ``v`` the column ``u = (t - v1/2, t + v1/2)`` is searched
    for the point where ``psi(u) = -v2`` (``psi`` increases along it since
    ``rho1 + rho2 > 0``), and ``psi_hat = -2 v2 - 2 t``.
    """
    v = v_grid.nodes()
    v1, v2 = v[..., 0], v[..., 1]
    tot = float(u_grid.slope[0] + u_grid.slope[1])
    f = u_grid.values if u_values is None else u_values
    amp = float(np.max(np.abs(f))) + 1e-12
    centre = (-v2 - (u_grid.slope[1] - u_grid.slope[0]) * v1 / 2.0) / tot
    lo = centre - 2 * amp / tot - 1e-9
    hi = centre + 2 * amp / tot + 1e-9

    def psi(t):
        pts = np.stack([t - v1 / 2.0, t + v1 / 2.0], axis=-1)
        return interpolate(u_grid, pts, f)

    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        above = psi(mid) > -v2
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    t = 0.5 * (lo + hi)
    psi_hat = -2.0 * v2 - 2.0 * t
    return psi_hat - (v - v_grid.origin) @ v_grid.slope


def v_grid_from_u(u_grid, n, n_eta=None):
    """Level-set torus grid matching a periodic u-grid of mean slope ``u_grid.slope``."""
    g = v_torus(n, u_grid.slope, n_eta=n_eta)
    g.values = u_to_v_values(u_grid, g)
    return g
