"""Monte Carlo estimators tied to the closed-form predictions of ``thermo``.

Site observables are computed exactly per configuration: a particle with
``a`` free positions above it and ``c`` below is the particle ``b^(u)`` of
exactly ``a + c + 1`` vertices ``u`` of its column, at signed offsets
``-a .. c``.  Summing the site indicator over those offsets gives closed
per-particle expressions, so every snapshot yields ``L^2`` site samples at
the cost of one pass over the particles.

Predictions are evaluated both at the requested slope and at the slope the
finite torus actually realizes (``state.slope()``); z-scores use the latter.
"""
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from . import thermo
from .dynamics import DYN_I, DYN_II, DynamicsKind, Engine, drift_sum, replica_seeds
from .tiling import all_ranges, new_torus

BURN_IN_FACTOR = 20.0


@dataclass
class EstimateReport:
    name: str
    estimate: float
    stderr: float
    prediction: float
    z: float
    prediction_nominal: float = float("nan")
    meta: dict = field(default_factory=dict)

    @property
    def rel_resolution(self):
        """Relative discrepancy that would produce ``|z| = 3``."""
        return 3.0 * self.stderr / abs(self.prediction)

    def within(self, zmax=3.0):
        return abs(self.z) <= zmax

    def to_dict(self):
        d = asdict(self)
        d["rel_resolution"] = self.rel_resolution
        return d


def batch_means(x, n_batches=20):
    """Mean and batch-means standard error of a stationary series."""
    x = np.asarray(x, dtype=float)
    if len(x) < 2:
        raise ValueError("need at least two samples for an error bar")
    n_batches = min(n_batches, len(x))
    per = len(x) // n_batches
    means = x[: per * n_batches].reshape(n_batches, per).mean(axis=1)
    return float(x.mean()), float(means.std(ddof=1) / np.sqrt(n_batches))


def _report(name, series, prediction, nominal, meta, n_batches):
    est, se = batch_means(series, n_batches)
    z = (est - prediction) / se if se > 0 else (0.0 if est == prediction else np.inf)
    return EstimateReport(name, est, se, float(prediction), float(z), float(nominal), dict(meta))


# per-configuration observables ---------------------------------------------------------


def free_sites(state):
    """Arrays ``(a, c)`` of free positions above and below each mobile particle."""
    lo, hi = all_ranges(state)
    a = (state.pos - lo) // 2
    c = (hi - state.pos) // 2
    return a[state.mobile], c[state.mobile]


def site_observables(state):
    """Site averages of the equilibrium observables for one configuration.

    Keys: ``piX`` (X realized away from the particle), ``orr``
    (``|n| - 1`` on that event), ``delta`` (``n+ + 1`` on sites below the
    particle), ``delta_reflected`` (``1 - n-`` on sites above),
    ``mobility_first_term`` (``(|I| + 1) / 12`` on the event) and ``abs_n``.
    """
    a, c = free_sites(state)
    sites = float(state.L * state.L)
    return {
        "piX": np.sum(a + c) / sites,
        "orr": np.sum(a * (a - 1) + c * (c - 1)) / 2.0 / sites,
        "delta": np.sum(c * (c + 1)) / 2.0 / sites,
        "delta_reflected": np.sum(a * (a + 1)) / 2.0 / sites,
        "mobility_first_term": np.sum((a + c) * (a + c + 2)) / 12.0 / sites,
        "abs_n": np.sum(a * (a + 1) + c * (c + 1)) / 2.0 / sites,
    }


def second_moment_exact(kind, a, c):
    """``sum_y c_{b,y} y^2`` as a ``Fraction`` for a particle with ``a`` sites above and ``c`` below."""
    size = a + c + 1
    total = Fraction(0)
    for y in list(range(-a, 0)) + list(range(1, c + 1)):
        if kind.base == "DynI":
            total += Fraction(y * y, 2 * abs(y))
        elif kind.base == "DynII":
            total += Fraction(y * y, size)
        else:
            raise ValueError("second moments are tabulated for DynI and DynII")
    return total


def second_moment_by_enumeration(states, kind):
    """Average of ``sum_y c y^2`` over each particle's range, binned by ``|I|``.

    For every particle of every state the particle is placed at each
    position of its range in turn and the exact second moment is averaged.
    Returns ``{k: (Fraction average, count)}``; the prediction is ``(k^2-1)/6``.
    """
    cache = {}
    bins = {}
    for state in states:
        a, c = free_sites(state)
        for k in np.unique(a + c + 1).tolist():
            if k not in cache:
                cache[k] = sum((second_moment_exact(kind, p, k - 1 - p) for p in range(k)), Fraction(0)) / k
            n = int(np.sum(a + c + 1 == k))
            avg, count = bins.get(k, (cache[k], 0))
            bins[k] = (avg, count + n)
    return bins


def conditional_uniformity(positions):
    """Chi-square p-values that the offset inside a range of size ``k`` is uniform.

    ``positions`` maps ``k`` to an integer array of offsets ``0 .. k-1``.
    """
    from scipy import stats

    out = {}
    for k, offs in sorted(positions.items()):
        if k < 2 or len(offs) < 5 * k:
            continue
        counts = np.bincount(offs, minlength=k)
        out[k] = float(stats.chisquare(counts).pvalue)
    return out


# equilibrium chains ---------------------------------------------------------------------


def equilibrate(state, kind, seed, burn_in=BURN_IN_FACTOR):
    """Engine on a copy of ``state`` after ``burn_in * L^2`` moves per particle."""
    eng = Engine(state.copy(), kind, seed=seed)
    eng.run_per_particle(burn_in * state.L**2)
    return eng


def sample_chain(L, rho, kind, snapshots, seed=0, burn_in=BURN_IN_FACTOR, spacing=1.0, uniformity_stride=4):
    """Run one equilibrium chain and return per-snapshot observables.

    Returns ``(series, extra)`` where ``series`` maps observable names to
    arrays of per-snapshot site averages and ``extra`` holds the drift-sum
    check count, the conditional-uniformity offsets and the realized slope.
    """
    state = new_torus(L, rho)
    eng = equilibrate(state, kind, seed, burn_in)
    series = {}
    offsets = {}
    drift_violations = 0
    cols = np.arange(0, L, uniformity_stride)
    for _ in range(snapshots):
        eng.run_until(eng.t + spacing)
        s = eng.state
        for key, val in site_observables(s).items():
            series.setdefault(key, []).append(val)
        if drift_sum(s, DYN_I) != 0:
            drift_violations += 1
        lo, hi = all_ranges(s)
        k = ((hi - lo) // 2 + 1)[cols].ravel()
        off = ((s.pos - lo) // 2)[cols].ravel()
        for kk in np.unique(k).tolist():
            offsets.setdefault(kk, []).append(off[k == kk])
    offsets = {k: np.concatenate(v) for k, v in offsets.items()}
    extra = {
        "drift_violations": drift_violations,
        "uniformity_offsets": offsets,
        "realized_slope": eng.state.slope().tolist(),
        "events": eng.events,
        "burn_in_moves_per_particle": burn_in * L**2,
    }
    return {k: np.array(v) for k, v in series.items()}, extra


def estimate_equilibrium(L, rho, kind, samples, seed=0, burn_in=BURN_IN_FACTOR, spacing=1.0, n_batches=20):
    """Estimate piX, orr, delta (both orientations) and the mobility first term.

    ``samples`` counts site samples; each snapshot contributes ``L^2``.
    """
    snapshots = max(2 * n_batches, int(np.ceil(samples / L**2)))
    series, extra = sample_chain(L, rho, kind, snapshots, seed, burn_in, spacing)
    realized = extra["realized_slope"]
    pred = thermo.predicted_observables(realized)
    nominal = thermo.predicted_observables(rho)
    meta = {
        "L": L, "slope": list(map(float, rho)), "realized_slope": realized, "kind": kind.tag,
        "burn_in_moves_per_particle": extra["burn_in_moves_per_particle"], "snapshots": snapshots,
        "site_samples": snapshots * L * L, "seed": seed, "spacing": spacing, "events": extra["events"],
    }
    reports = {name: _report(name, series[name], pred[name], nominal[name], meta, n_batches)
               for name in ("piX", "orr", "delta", "mobility_first_term")}
    reports["delta_reflected"] = _report("delta_reflected", series["delta_reflected"], pred["delta"], nominal["delta"], meta, n_batches)
    half = {name: batch_means(series[name], n_batches // 2)[1] for name in reports if name != "delta_reflected"}
    checks = {
        "drift_violations": extra["drift_violations"],
        "recombination_residual": float(np.max(np.abs(series["orr"] + series["piX"] - series["abs_n"]))),
        "batch_se_ratio": {k: half[k] / reports[k].stderr for k in half},
        "uniformity_pvalues": conditional_uniformity(extra["uniformity_offsets"]),
    }
    return reports, checks


def estimate_piX(L, rho, samples, kind=DYN_II, seed=0, **kw):
    return estimate_equilibrium(L, rho, kind, samples, seed, **kw)[0]["piX"]


def estimate_orr_and_delta(L, rho, samples, kind=DYN_II, seed=0, **kw):
    reps = estimate_equilibrium(L, rho, kind, samples, seed, **kw)[0]
    return reps["orr"], reps["delta"]


def estimate_mobility_first_term(L, rho, samples, kind, seed=0, **kw):
    return estimate_equilibrium(L, rho, kind, samples, seed, **kw)[0]["mobility_first_term"]


# linear response -------------------------------------------------------------------------


def _drift_rate(state, B, kind):
    # instantaneous mean of sum_y c_{b,y} y under the tilted rates, per site
    a, c = free_sites(state)
    out = 0.0
    for aa, cc in zip(a.tolist(), c.tolist()):
        size = aa + cc + 1
        for y in range(-aa, cc + 1):
            if y == 0:
                continue
            w = 1.0 / (2 * abs(y)) if kind.base == "DynI" else 1.0 / size
            out += w * np.exp(0.5 * B * y) * y
    return out / state.L**2


def _displacement_run(start, kind, B, t, seed, probes):
    eng = Engine(start.copy(), DynamicsKind(kind.base, B), seed=seed)
    disp0 = int(np.sum(eng.state.pos))
    comp = 0.0
    dt = t / probes
    for i in range(probes):
        comp += _drift_rate(eng.state, B, kind) * dt
        eng.run_until((i + 1) * dt)
    sites = start.L**2
    # sum of doubled positions moves by 2y per jump of y
    return (int(np.sum(eng.state.pos)) - disp0) / 2.0 / sites / t, comp / t


def linear_response_velocity(L, rho, kind, B=0.1, t=5.0, replicas=40, seed=0, burn_in=BURN_IN_FACTOR, gap=2.0, probes=10):
    """Mobility from the velocity response to a small field ``+-B``.

    Replica starts are snapshots of one untilted chain separated by ``gap``
    time units.  From each start the ``+B``, ``-B`` and ``B = 0`` runs share
    the random stream.  Two velocity measurements are reported: realized
    height displacement per site per unit time, and the time average of the
    instantaneous drift (its compensator), which has the same mean.
    """
    if abs(B) > 0.2:
        raise ValueError("linear response requires |B| <= 0.2")
    base = equilibrate(new_torus(L, rho), DynamicsKind(kind.base), seed, burn_in)
    seeds = replica_seeds(seed + 1, replicas)
    rows = []
    for r in range(replicas):
        base.run_until(base.t + gap)
        start = base.state.copy()
        vp, cp = _displacement_run(start, kind, B, t, seeds[r], probes)
        vm, cm = _displacement_run(start, kind, -B, t, seeds[r], probes)
        v0, _ = _displacement_run(start, kind, 0.0, t, seeds[r], 1)
        rows.append((vp, vm, v0, cp, cm))
    rows = np.array(rows)
    realized = base.state.slope().tolist()
    mu_disp = (rows[:, 0] - rows[:, 1]) / (2 * B)
    mu_comp = (rows[:, 3] - rows[:, 4]) / (2 * B)
    se = lambda x: float(x.std(ddof=1) / np.sqrt(len(x)))
    vp, vm = rows[:, 0].mean(), rows[:, 1].mean()
    asym = abs(vp + vm) / max(abs(vp - vm), 1e-300)
    pred = thermo.mobility(realized)
    meta = {"L": L, "slope": list(map(float, rho)), "realized_slope": realized, "kind": kind.base, "B": B,
            "t": t, "replicas": replicas, "seed": seed, "burn_in_moves_per_particle": burn_in * L**2}
    mk = lambda name, x: EstimateReport(name, float(x.mean()), se(x), pred, float((x.mean() - pred) / se(x)),
                                        thermo.mobility(rho), meta)
    return {
        "mobility_displacement": mk("mobility_displacement", mu_disp),
        "mobility_compensator": mk("mobility_compensator", mu_comp),
        "zero_field_velocity": {"estimate": float(rows[:, 2].mean()), "stderr": se(rows[:, 2])},
        "velocity_plus": float(vp), "velocity_minus": float(vm),
        "nonlinear_asymmetry": float(asym), "nonlinear_warning": bool(asym > 0.2),
    }


# asymmetric current ---------------------------------------------------------------------------


def asymmetric_current_estimate(L, rho, t=50.0, replicas=20, seed=0, burn_in=BURN_IN_FACTOR, gap=2.0, log=None):
    """Mean integrated current per unit time over all vertices, against ``V``.

    Starting states are drawn from an untilted DynII chain; the uniform
    measure at fixed particle count is stationary for the asymmetric rule on
    the torus, so these are stationary starts.
    """
    from .tiling import height_at

    base = equilibrate(new_torus(L, rho), DYN_II, seed, burn_in)
    seeds = replica_seeds(seed + 7, replicas)
    u1, u2 = np.meshgrid(np.arange(L), np.arange(L), indexing="ij")
    per_rep = []
    for r in range(replicas):
        base.run_until(base.t + gap)
        start = base.state.copy()
        h0 = height_at(start, u1, u2)
        eng = Engine(start, DynamicsKind("Asymmetric"), seed=seeds[r])
        eng.run_until(t, log if r == 0 else None)
        per_rep.append(float(np.mean(height_at(eng.state, u1, u2) - h0)) / t)
    x = np.array(per_rep)
    realized = base.state.slope().tolist()
    pred = thermo.velocity(realized)
    se = float(x.std(ddof=1) / np.sqrt(len(x)))
    meta = {"L": L, "slope": list(map(float, rho)), "realized_slope": realized, "t": t, "replicas": replicas, "seed": seed}
    return EstimateReport("current_per_time", float(x.mean()), se, pred, float((x.mean() - pred) / se), thermo.velocity(rho), meta)


# hydrodynamic comparison ------------------------------------------------------------------------


def dual_mode(rho, mode):
    """Wave vector of the ``mode = (i, j)`` Fourier mode on the level-set torus at slope ``rho``."""
    r1, r2 = float(rho[0]), float(rho[1])
    k2 = mode[1] / (r1 + r2)
    return np.array([mode[0] - r1 * k2, k2])


@dataclass
class HydroResult:
    L: int
    times: list
    sup_distance: list
    l2_distance: list
    realized_slope: list
    replicas: int
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def _hydro_replica(args):
    state, kind, times, L, seed = args
    from .tiling import levelset_field

    eng = Engine(state.copy(), kind, seed=seed)
    P = L - state.N
    c = np.arange(L)
    v1, lam = np.meshgrid(-c, np.arange(P), indexing="ij")
    out = []
    for t in times:
        eng.run_until(t * L * L)
        out.append(levelset_field(eng.state).value(v1, lam) / L)
    return np.array(out), eng.events


def hydro_compare(L, rho=(1 / 3, 1 / 3), amplitude=0.1, t_end=0.1, replicas=5, kind=DYN_II, seed=0,
                  mode=(1, 0), outputs=None, grid_n=64, executor=None):
    """Replica-averaged rescaled level-set field against the level-set PDE.

    The initial surface is ``s_bar . v + amplitude sin(2 pi k . v)`` on the
    level-set torus of the realized slope.  Microscopic time is ``t L^2``.
    Distances are taken over the lattice points ``(v1, lam + 1/2) / L`` of
    one fundamental domain.
    """
    from . import pde
    from .geometry import level_from_slope
    from .tiling import _torus_counts, from_levelset_function

    n3, h1, _ = _torus_counts(L, rho)
    realized = np.array([h1 / L, (L - n3 - h1) / L])
    sbar = level_from_slope(realized)
    k = dual_mode(realized, mode)
    macro = lambda x, y: amplitude * np.sin(2 * np.pi * (k[0] * x + k[1] * y))
    micro = lambda v1, v2: sbar[0] * v1 + sbar[1] * v2 + L * macro(v1 / L, v2 / L)
    state = from_levelset_function(L, n3, h1, micro)
    times = sorted(set([0.0] + list(outputs or []) + [float(t_end)]))

    n_eta = max(8, int(round(grid_n * (realized[0] + realized[1]))))
    grid = pde.v_torus(grid_n, realized, macro, n_eta=n_eta)
    traj = pde.solve_v(grid, t_end, outputs=times)

    seeds = replica_seeds(seed, replicas)
    jobs = [(state, kind, times, L, s) for s in seeds]
    results = list(executor.map(_hydro_replica, jobs)) if executor is not None else [_hydro_replica(j) for j in jobs]
    mean = np.mean([r[0] for r in results], axis=0)

    P = L - n3
    c = np.arange(L)
    v1, lam = np.meshgrid(-c, np.arange(P), indexing="ij")
    pts = np.stack([v1 / L, (lam + 0.5) / L], axis=-1)
    sup, l2 = [], []
    for i, t in enumerate(times):
        j = int(np.argmin(np.abs(np.array(traj.times) - t)))
        ref = pde.interpolate(grid, pts, traj.snapshots[j])
        diff = mean[i] - ref
        sup.append(float(np.max(np.abs(diff))))
        l2.append(float(np.sqrt(np.mean(diff**2))))
    meta = {"kind": kind.tag, "amplitude": amplitude, "mode": list(mode), "seed": seed, "grid": [grid_n, n_eta],
            "events": int(sum(r[1] for r in results)), "slope": list(map(float, rho))}
    return HydroResult(L, times, sup, l2, realized.tolist(), replicas, meta)
