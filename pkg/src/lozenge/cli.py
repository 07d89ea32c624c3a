"""Command-line entry point.

Every subcommand reads defaults, then an optional TOML file (``--config``,
either flat keys or a table named after the subcommand), then explicit
flags.  The merged configuration is echoed in a JSON report together with
the seed, package versions, results and a list of checks.  Wall-clock data
live under ``timing`` so that reports from identical configurations are
otherwise byte-identical.

Exit status: 0 when every enforced check passes, 1 otherwise, 2 on usage or
configuration errors.
"""
import argparse
import json
import logging
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from importlib import resources

import numpy as np

from . import __version__

log = logging.getLogger("lozenge")

THIRD = 1.0 / 3.0

DEFAULTS = {
    "check-identities": {
        "slope": [THIRD, THIRD], "random_slopes": 1000, "identity_points": 100, "seed": 0,
        "identity_margin": 0.1, "drift_states": 10000, "trapezoid_grid": 0, "tol_det": 1e-9, "tol_identity": 1e-5, "tol_symmetry": 1e-14,
        "tol_nearest": 1e-6, "tol_xi": 1e-4, "tol_two_edge": 1e-3, "curl_min": 1e-3,
    },
    "sample-equilibrium": {
        "L": 32, "slope": [THIRD, THIRD], "samples": 1_000_000, "kind": "both", "burn_in": 20.0,
        "spacing": 1.0, "batches": 20, "seed": 0, "zmax": 3.0, "resolution": 0.05,
    },
    "estimate-mobility": {
        "L": 32, "slope": [THIRD, THIRD], "B": 0.1, "t": 5.0, "replicas": 40, "kind": "both",
        "burn_in": 20.0, "seed": 0, "tolerance": 0.015,
    },
    "run-asymmetric": {
        "L": 32, "slope": [THIRD, THIRD], "t": 50.0, "replicas": 20, "burn_in": 20.0, "seed": 0,
        "tolerance": 0.03, "event_log": None,
    },
    "pde-solve": {
        "system": "u", "profile": "sine", "n": 32, "slope": [THIRD, THIRD], "amplitude": 0.01,
        "t_end": 0.05, "seed": 0, "trajectory_csv": None, "tol_affine": 1e-12, "tol_volume": 1e-10,
        "tol_decay": 0.10, "tol_heat": 0.01, "tol_l2_step": 1e-8,
    },
    "hydro-compare": {
        "L": 64, "slope": [THIRD, THIRD], "amplitude": 0.1, "t_end": 0.1, "replicas": 5, "kind": "DynII",
        "grid": 64, "seed": 0, "tolerance": 0.05, "compare_L": 0,
    },
}


class ConfigError(ValueError):
    pass


# configuration ------------------------------------------------------------------------------


def _load_toml(path):
    try:
        import tomllib
    except ImportError:
        import tomli as tomllib
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def merge_config(command, file_cfg, flags):
    cfg = dict(DEFAULTS[command])
    section = file_cfg.get(command, {k: v for k, v in file_cfg.items() if not isinstance(v, dict)})
    for key, val in section.items():
        key = key.replace("-", "_")
        if key not in cfg:
            raise ConfigError(f"unknown key {key!r} for {command}")
        cfg[key] = val
    for key, val in flags.items():
        if val is not None:
            cfg[key] = val
    _check_config(command, cfg)
    return cfg


def _check_config(command, cfg):
    for key, val in cfg.items():
        if (key.startswith("tol") or key in ("tolerance", "zmax", "resolution")) and not val > 0:
            raise ConfigError(f"tolerance {key} must be positive")
    if "slope" in cfg:
        from .geometry import in_triangle

        if len(cfg["slope"]) != 2 or not in_triangle(np.asarray(cfg["slope"], dtype=float)):
            raise ConfigError(f"slope {cfg['slope']} is not inside the triangle")
    if "L" in cfg and (cfg["L"] < 4 or cfg["L"] % 2):
        raise ConfigError("L must be an even integer >= 4")
    if "kind" in cfg and cfg["kind"] not in ("DynI", "DynII", "both"):
        raise ConfigError("kind must be DynI, DynII or both")
    if command == "pde-solve":
        if cfg["system"] not in ("u", "v"):
            raise ConfigError("system must be u or v")
        if cfg["profile"] not in ("affine", "sine", "pair"):
            raise ConfigError("profile must be affine, sine or pair")


def worker_count(flag):
    env = os.environ.get("LOZENGE_WORKERS")
    if env:
        return max(1, int(env))
    return max(1, int(flag or 1))


# report plumbing -------------------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "to_dict"):
        return _jsonable(obj.to_dict())
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else repr(x)
    if obj is None or isinstance(obj, str):
        return obj
    from fractions import Fraction

    if isinstance(obj, Fraction):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


class Checks:
    def __init__(self):
        self.items = []

    def add(self, name, value, threshold, passed, enforced=True, note=None):
        item = {"name": name, "value": value, "threshold": threshold, "passed": bool(passed), "enforced": enforced}
        if note:
            item["note"] = note
        self.items.append(item)
        return passed

    def le(self, name, value, threshold, **kw):
        return self.add(name, float(value), float(threshold), float(value) <= threshold, **kw)

    @property
    def passed(self):
        return all(c["passed"] for c in self.items if c["enforced"])


def versions():
    from importlib.metadata import PackageNotFoundError, version

    from ._accel import backend_name

    def installed(name):
        try:
            return version(name)
        except PackageNotFoundError:
            return "absent"

    out = {"lozenge": __version__, "python": platform.python_version(), "backend": backend_name()}
    out.update({name: installed(name) for name in ("numpy", "scipy", "numba")})
    return out


def load_schema():
    return json.loads(resources.files("lozenge").joinpath("report_schema.json").read_text())


def validate_report(report):
    import jsonschema

    jsonschema.validate(report, load_schema())


# subcommands ------------------------------------------------------------------------------------


def cmd_check_identities(cfg, checks, pool):
    from . import determinantal as det
    from . import thermo
    from .geometry import level_from_slope

    rng = np.random.default_rng(cfg["seed"])
    slopes = _random_slopes(rng, cfg["random_slopes"])
    hess = thermo.sigma_hessian(slopes)
    det_res = float(np.max(np.abs(np.linalg.det(hess) - np.pi**2)))
    mu_res = float(np.max(np.abs(thermo.mobility(slopes) - thermo.velocity(slopes) / 2)))
    w = thermo.flux_W(slopes)
    w_swapped = thermo.flux_W(slopes[:, ::-1])
    sym_res = float(np.max(np.abs(w[:, 1] - w_swapped[:, 0])))
    # finite differences lose accuracy as a slope approaches the triangle's edge
    pts = level_from_slope(_random_slopes(rng, cfg["identity_points"], margin=cfg["identity_margin"]))
    resid = [thermo.identity_residuals(s) for s in pts]
    worst = {k: float(max(abs(r[k]) for r in resid)) for k in ("dG_ds1", "dG_ds2", "curl_hat", "curl_rho")}
    here = np.asarray(cfg["slope"], dtype=float)
    curl_here = float(abs(thermo.curl_W(here)))
    checks.le("det_sigma_hessian_minus_pi2", det_res, cfg["tol_det"])
    checks.le("mobility_minus_half_velocity", mu_res, 1e-15)
    checks.le("W2_minus_swapped_W1", sym_res, cfg["tol_symmetry"])
    for k, v in worst.items():
        checks.le(f"identity_residual_{k}", v, cfg["tol_identity"])
    checks.add("curl_W_nonzero_at_slope", curl_here, cfg["curl_min"], curl_here > cfg["curl_min"],
               note="W2(r1,r2)=W1(r2,r1) makes the curl vanish on the diagonal r1=r2")
    states, bad = _drift_sum_scan(cfg["drift_states"], cfg["seed"])
    checks.add("drift_sum_nonzero_states", bad, 0, bad == 0, note=f"{states} sampled torus states, exact arithmetic")
    dreport = det.determinantal_report(here, trapezoid_grid=cfg["trapezoid_grid"] or None)
    r3 = 1 - here.sum()
    for i, (key, target) in enumerate(zip(("type1", "type2", "type3"), (here[0], here[1], r3))):
        checks.le(f"nearest_edge_density_{key}", abs(dreport["nearest_edge_density"][key] - target), cfg["tol_nearest"])
    v = thermo.velocity(here)
    checks.le("xi_minus_velocity", abs(dreport["xi"] - v), cfg["tol_xi"])
    pix = thermo.predicted_observables(here)["piX"]
    checks.le("two_edge_probability_minus_piX", abs(dreport["two_edge_probability"] - pix), cfg["tol_two_edge"])
    if "xi_trapezoid" in dreport:
        checks.le("xi_trapezoid_minus_velocity", abs(dreport["xi_trapezoid"] - v), cfg["tol_xi"])
    return {"thermo": thermo.thermo_report(here), "determinantal": dreport,
            "random_slopes": cfg["random_slopes"], "worst_identity_residuals": worst}


def _drift_sum_scan(n_states, seed, L=16):
    """Count states with nonzero drift sum along DynI and DynII chains at random slopes."""
    from .dynamics import DYN_I, DYN_II, Engine, drift_sum
    from .tiling import new_torus

    rng = np.random.default_rng(seed)
    bad = 0
    per_chain = max(1, n_states // 20)
    done = 0
    for i in range(20):
        kind = (DYN_I, DYN_II)[i % 2]
        eng = Engine(new_torus(L, _random_slopes(rng, 1, margin=0.1)[0]), kind, seed=seed + i)
        for _ in range(min(per_chain, n_states - done)):
            eng.run_events(L)
            bad += drift_sum(eng.state, kind) != 0
            done += 1
    return done, bad


def _random_slopes(rng, n, margin=0.02):
    out = []
    while len(out) < n:
        r = rng.uniform(margin, 1 - margin, size=2)
        if r.sum() < 1 - margin:
            out.append(r)
    return np.array(out)


def _kinds(cfg):
    from .dynamics import DynamicsKind

    names = ("DynI", "DynII") if cfg["kind"] == "both" else (cfg["kind"],)
    return [DynamicsKind(n) for n in names]


def _equilibrium_job(args):
    from .estimators import estimate_equilibrium

    cfg, kind, seed = args
    return estimate_equilibrium(cfg["L"], cfg["slope"], kind, cfg["samples"], seed=seed, burn_in=cfg["burn_in"],
                                spacing=cfg["spacing"], n_batches=cfg["batches"])


def cmd_sample_equilibrium(cfg, checks, pool):
    kinds = _kinds(cfg)
    jobs = [(cfg, k, cfg["seed"] + i) for i, k in enumerate(kinds)]
    outs = list(pool.map(_equilibrium_job, jobs)) if pool else [_equilibrium_job(j) for j in jobs]
    results = {}
    for kind, (reports, extra) in zip(kinds, outs):
        for name, rep in reports.items():
            checks.le(f"{kind.tag}_{name}_abs_z", abs(rep.z), cfg["zmax"])
            if name != "delta_reflected":
                checks.le(f"{kind.tag}_{name}_resolution", rep.rel_resolution, cfg["resolution"])
        checks.add(f"{kind.tag}_drift_sum_zero", extra["drift_violations"], 0, extra["drift_violations"] == 0)
        results[kind.tag] = {"estimates": reports, "checks": extra}
    return results


def cmd_estimate_mobility(cfg, checks, pool):
    from . import thermo
    from .estimators import linear_response_velocity

    results = {}
    for i, kind in enumerate(_kinds(cfg)):
        out = linear_response_velocity(cfg["L"], cfg["slope"], kind, B=cfg["B"], t=cfg["t"], replicas=cfg["replicas"],
                                       seed=cfg["seed"] + i, burn_in=cfg["burn_in"])
        rep = out["mobility_displacement"]
        nominal = thermo.mobility(cfg["slope"])
        checks.le(f"{kind.tag}_mobility_minus_nominal", abs(rep.estimate - nominal), cfg["tolerance"])
        checks.le(f"{kind.tag}_mobility_abs_z_realized", abs(rep.z), 3.0)
        zf = out["zero_field_velocity"]
        checks.le(f"{kind.tag}_zero_field_velocity_abs_z", abs(zf["estimate"]) / zf["stderr"], 3.0)
        checks.add(f"{kind.tag}_linear_regime", out["nonlinear_asymmetry"], 0.2, not out["nonlinear_warning"], enforced=False)
        results[kind.tag] = out
    return results


def cmd_run_asymmetric(cfg, checks, pool):
    from . import thermo
    from .dynamics import EventLog
    from .estimators import asymmetric_current_estimate

    log_obj = EventLog() if cfg["event_log"] else None
    rep = asymmetric_current_estimate(cfg["L"], cfg["slope"], t=cfg["t"], replicas=cfg["replicas"], seed=cfg["seed"],
                                      burn_in=cfg["burn_in"], log=log_obj)
    if log_obj is not None:
        log_obj.to_csv(cfg["event_log"])
    nominal = thermo.velocity(cfg["slope"])
    checks.le("current_minus_velocity", abs(rep.estimate - nominal), cfg["tolerance"], enforced=False,
              note="exploratory: compared against V at the requested slope")
    checks.le("current_abs_z_realized", abs(rep.z), 3.0, enforced=False)
    return {"current": rep, "logged_events": len(log_obj) if log_obj is not None else 0}


def cmd_pde_solve(cfg, checks, pool):
    from . import pde
    from .geometry import level_from_slope

    rho = np.asarray(cfg["slope"], dtype=float)
    system, n, amp = cfg["system"], cfg["n"], cfg["amplitude"]
    slope = rho if system == "u" else level_from_slope(rho)
    make = lambda f: pde.rectangle_torus(system, n, slope, f)
    if cfg["profile"] == "affine":
        grid = make(None)
        traj = pde.solve(grid, cfg["t_end"])
        change = float(np.max(np.abs(traj.snapshots[-1] - traj.snapshots[0])))
        checks.le("affine_max_change", change, cfg["tol_affine"])
        result = {"max_change": change}
    elif cfg["profile"] == "sine":
        grid = make(lambda x, y: amp * np.sin(2 * np.pi * x))
        traj = pde.solve(grid, cfg["t_end"])
        a0, a1 = (pde.mode_amplitude(grid, v) for v in (traj.snapshots[0], traj.snapshots[-1]))
        rate = -np.log(a1 / a0) / cfg["t_end"]
        if system == "u":
            pred, tol, name = pde.linear_decay_rate(rho), cfg["tol_decay"], "linearized_decay_rel_error"
        else:
            pred, tol, name = 0.5 * (2 * np.pi) ** 2, cfg["tol_heat"], "heat_decay_rel_error"
        checks.le(name, abs(rate / pred - 1), tol)
        result = {"measured_rate": rate, "predicted_rate": pred}
    else:
        g1 = make(lambda x, y: amp * np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y))
        g2 = make(lambda x, y: -amp * np.cos(2 * np.pi * (x + y)))
        traj, other = pde.solve_pair(g1, g2, cfg["t_end"])
        d = pde.diagnostics(traj, other)
        inc = float(np.max(np.diff(d.l2_distance))) if len(d.l2_distance) > 1 else 0.0
        checks.le("l2_distance_max_step_increase", inc, cfg["tol_l2_step"])
        result = {"l2_start": d.l2_distance[0], "l2_end": d.l2_distance[-1]}
        grid = g1
    d = pde.diagnostics(traj)
    vol = float(np.max(np.abs(d.volume - d.volume[0])) / max(cfg["t_end"], 1e-300))
    checks.le("periodic_volume_drift_per_time", vol, cfg["tol_volume"])
    if cfg["trajectory_csv"]:
        _write_trajectory(cfg["trajectory_csv"], traj)
    result.update({"steps": len(traj.step_times) - 1, "rejected_steps": traj.rejected_steps,
                   "max_excursion": d.max_excursion, "h": grid.h})
    return result


def _write_trajectory(path, traj):
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "node", "value"])
        for t, snap in zip(traj.times, traj.snapshots):
            for node, val in enumerate(snap.ravel().tolist()):
                w.writerow([repr(t), node, repr(val)])


def cmd_hydro_compare(cfg, checks, pool):
    from .dynamics import DynamicsKind
    from .estimators import hydro_compare

    kind = DynamicsKind(cfg["kind"])
    run = lambda L: hydro_compare(L, cfg["slope"], cfg["amplitude"], cfg["t_end"], cfg["replicas"], kind,
                                  cfg["seed"], grid_n=cfg["grid"], executor=pool)
    main = run(cfg["L"])
    checks.le("sup_distance_at_t_end", main.sup_distance[-1], cfg["tolerance"])
    out = {"main": main}
    if cfg["compare_L"]:
        small = run(cfg["compare_L"])
        out["comparison"] = small
        growth = main.sup_distance[-1] - small.sup_distance[-1]
        checks.add("sup_distance_growth_on_refinement", growth, 0.0, growth <= 0.0)
    return out


COMMANDS = {
    "check-identities": cmd_check_identities,
    "sample-equilibrium": cmd_sample_equilibrium,
    "estimate-mobility": cmd_estimate_mobility,
    "run-asymmetric": cmd_run_asymmetric,
    "pde-solve": cmd_pde_solve,
    "hydro-compare": cmd_hydro_compare,
}


# argument parsing -----------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="lozenge", description="Lozenge-tiling dynamics experiments.")
    parser.add_argument("--version", action="version", version=f"lozenge {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML file with defaults for this subcommand")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="write the JSON report here instead of stdout")
        p.add_argument("--workers", type=int, help="process pool size (env LOZENGE_WORKERS overrides)")
        p.add_argument("--log-level", default="WARNING")

    def slope(p):
        p.add_argument("--slope", type=float, nargs=2, metavar=("RHO1", "RHO2"))

    p = sub.add_parser("check-identities", help="closed-form and determinantal identity residuals")
    common(p), slope(p)
    p.add_argument("--random-slopes", dest="random_slopes", type=int)
    p.add_argument("--trapezoid-grid", dest="trapezoid_grid", type=int)

    p = sub.add_parser("sample-equilibrium", help="equilibrium observables against closed forms")
    common(p), slope(p)
    p.add_argument("--L", type=int)
    p.add_argument("--samples", type=float)
    p.add_argument("--kind", choices=["DynI", "DynII", "both"])
    p.add_argument("--burn-in", dest="burn_in", type=float)
    p.add_argument("--spacing", type=float)
    p.add_argument("--batches", type=int)

    p = sub.add_parser("estimate-mobility", help="mobility from linear response to a field")
    common(p), slope(p)
    p.add_argument("--L", type=int)
    p.add_argument("--B", type=float)
    p.add_argument("--t", type=float)
    p.add_argument("--replicas", type=int)
    p.add_argument("--kind", choices=["DynI", "DynII", "both"])

    p = sub.add_parser("run-asymmetric", help="current of the totally asymmetric dynamics")
    common(p), slope(p)
    p.add_argument("--L", type=int)
    p.add_argument("--t", type=float)
    p.add_argument("--replicas", type=int)
    p.add_argument("--event-log", dest="event_log", help="CSV path for the first replica's moves")

    p = sub.add_parser("pde-solve", help="solve the hydrodynamic PDE with diagnostics")
    common(p), slope(p)
    p.add_argument("--system", choices=["u", "v"])
    p.add_argument("--profile", choices=["affine", "sine", "pair"])
    p.add_argument("--n", type=int)
    p.add_argument("--amplitude", type=float)
    p.add_argument("--t-end", dest="t_end", type=float)
    p.add_argument("--trajectory-csv", dest="trajectory_csv")

    p = sub.add_parser("hydro-compare", help="rescaled particle system against the PDE")
    common(p), slope(p)
    p.add_argument("--L", type=int)
    p.add_argument("--amplitude", type=float)
    p.add_argument("--t-end", dest="t_end", type=float)
    p.add_argument("--replicas", type=int)
    p.add_argument("--kind", choices=["DynI", "DynII"])
    p.add_argument("--grid", type=int)
    p.add_argument("--compare-L", dest="compare_L", type=int)
    return parser


_COMMON = {"config", "out", "workers", "log_level", "command"}


def run_cli(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING))
    flags = {k: v for k, v in vars(args).items() if k not in _COMMON}
    if flags.get("samples") is not None:
        flags["samples"] = int(flags["samples"])
    if flags.get("slope") is not None:
        flags["slope"] = list(flags["slope"])
    try:
        file_cfg = _load_toml(args.config) if args.config else {}
        cfg = merge_config(args.command, file_cfg, flags)
    except ConfigError as exc:
        print(f"lozenge: {exc}", file=sys.stderr)
        return 2
    workers = worker_count(args.workers)
    checks = Checks()
    started = time.time()
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        results = COMMANDS[args.command](cfg, checks, pool)
    except ValueError as exc:
        print(f"lozenge: {exc}", file=sys.stderr)
        return 2
    finally:
        if pool is not None:
            pool.shutdown()
    report = _jsonable({
        "subcommand": args.command,
        "config": cfg,
        "seed": cfg["seed"],
        "versions": versions(),
        "results": results,
        "checks": checks.items,
        "passed": checks.passed,
        "timing": {"started_unix": started, "wall_seconds": time.time() - started, "workers": workers},
    })
    validate_report(report)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    for c in checks.items:
        log.info("%s %s: %s (threshold %s)", "PASS" if c["passed"] else "FAIL", c["name"], c["value"], c["threshold"])
    return 0 if report["passed"] else 1


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
