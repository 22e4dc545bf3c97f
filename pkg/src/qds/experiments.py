"""Experiment runners: each turns a config into CSV rows plus shape checks.

Shape checks never raise.  A failed check is recorded as a violation; the
writer appends it to the CSV as a ``# violation:`` row and the CLI exits
nonzero.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .cone import ConeParams, cone_membership, random_cone_density, srb_bound_margin
from .config import ExperimentConfig
from .ergodic import (correlation_functional, ensemble_sup_deviation, limit_zeta,
                      operator_correlation)
from .observables import ObservableSpec
from .param_curve import build_row
from .pm_map import MapSequence, PMMap
from .rates import loglog_slope, operator_shape, rho, srb_shape
from .transfer_op import (GridDensity, OperatorCache, apply_density, build_ulam,
                          compose_apply, l1_distance, power_iterate)


@dataclass
class ExperimentResult:
    experiment: str
    columns: list
    rows: list
    violations: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    @property
    def ok(self):
        return not self.violations


def _cache(cfg):
    return OperatorCache(srb_tol=cfg.tolerances.srb_tol, srb_max_iter=cfg.tolerances.srb_max_iter)


def _is_constant_curve(curve):
    return len(curve.segments) == 1 and curve.segments[0].kind == "constant"


def _dominated(values, shapes, slack, calib_index):
    """Fit C = values[calib] / shapes[calib]; list indices where values > C shapes."""
    c = values[calib_index] / shapes[calib_index] if shapes[calib_index] > 0 else 0.0
    bad = [i for i in range(len(values))
           if i != calib_index and values[i] > c * shapes[i] * (1.0 + slack) + slack]
    return c, bad


def _strictly_decreasing(values):
    return all(b < a for a, b in zip(values, values[1:]))


# -- memory loss -----------------------------------------------------------

def _profile(name, grid, beta):
    if name == "uniform":
        return GridDensity.uniform(grid)
    return GridDensity.power_profile(grid, beta)


def run_decay(cfg: ExperimentConfig) -> ExperimentResult:
    """||L~_n (f - g)||_1 along the curve rows against rho(n)."""
    s, grid, b = cfg.section, cfg.grid, cfg.beta_star
    pb = b if s.profile_beta is None else s.profile_beta
    diff = _profile(s.f, grid, pb) - _profile(s.g, grid, pb)
    cache = _cache(cfg)
    levels = cfg.levels
    dists = []
    if _is_constant_curve(cfg.curve):
        op = cache.operator(cfg.curve.segments[0].params[0], grid)
        d, done = diff, 0
        for n in levels:
            for _ in range(n - done):
                d = apply_density(op, d)
            done = n
            dists.append(l1_distance(d, GridDensity.zeros(grid)))
    else:
        for n in levels:
            d = compose_apply(build_row(cfg.curve, n)[1:], grid, diff, cache)
            dists.append(l1_distance(d, GridDensity.zeros(grid)))
    rhos = [rho(n, b) for n in levels]
    tol = cfg.tolerances
    c0, bad = _dominated(dists, rhos, tol.domination_slack, 0)
    rows = [[n, dist, r, c0] for n, dist, r in zip(levels, dists, rhos)]
    violations = [f"n={levels[i]}: distance {dists[i]:.6g} exceeds C0*rho = {c0 * rhos[i]:.6g}"
                  for i in bad]
    slope = loglog_slope(levels, dists)
    if max(dists) > 0 and len(levels) >= 2:
        if not (tol.slope_min <= slope <= tol.slope_max):
            violations.append(f"log-log slope {slope:.4f} outside [{tol.slope_min}, {tol.slope_max}]")
    return ExperimentResult("decay", ["n", "l1_distance", "rho_n", "fitted_C"], rows, violations,
                            {"slope": slope, "fitted_C0": c0, "grid": list(grid.key)})


# -- parameter continuity --------------------------------------------------

def run_perturb(cfg: ExperimentConfig) -> ExperimentResult:
    """Operator and SRB distances between T_alpha and T_beta over a gap ladder.

    Operators are built at the exact parameters (no cache quantization), since
    the smallest gaps are close to the cache resolution.
    """
    s, grid, b, tol = cfg.section, cfg.grid, cfg.beta_star, cfg.tolerances
    gaps = sorted((float(g) for g in s.gaps), reverse=True)
    h = GridDensity.uniform(grid)
    op_a = build_ulam(PMMap(s.alpha), grid)
    srb_a = power_iterate(op_a, tol.srb_tol, tol.srb_max_iter)[0]
    push_a = apply_density(op_a, h)
    f = cfg.observable

    def one(gap):
        op_b = build_ulam(PMMap(s.alpha + gap), grid)
        srb_b = power_iterate(op_b, tol.srb_tol, tol.srb_max_iter)[0]
        return (l1_distance(push_a, apply_density(op_b, h)), l1_distance(srb_a, srb_b),
                abs(srb_a.integrate(f) - srb_b.integrate(f)))

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            out = list(pool.map(one, gaps))
    else:
        out = [one(g) for g in gaps]
    op_d = [o[0] for o in out]
    srb_d = [o[1] for o in out]
    mean_d = [o[2] for o in out]
    op_shape = [float(operator_shape(g, b)) for g in gaps]
    sr_shape = [float(srb_shape(g, b)) for g in gaps]
    rows = [[s.alpha, s.alpha + g, od, sd, sh] for g, od, sd, sh in zip(gaps, op_d, srb_d, sr_shape)]
    violations = []
    for name, vals, shape in (("op_dist", op_d, op_shape), ("srb_dist", srb_d, sr_shape)):
        if not _strictly_decreasing(vals):
            violations.append(f"{name} not strictly decreasing as the gap shrinks")
        c, bad = _dominated(vals, shape, tol.domination_slack, 0)
        violations += [f"{name} at gap {gaps[i]:.6g} exceeds fitted bound" for i in bad]
    return ExperimentResult(
        "perturb", ["alpha", "beta", "op_dist", "srb_dist", "bound_shape"], rows, violations,
        {"observable_mean_gap": mean_d, "operator_shape": op_shape,
         "fitted_C2_operator": op_d[0] / op_shape[0], "fitted_C2_srb": srb_d[0] / sr_shape[0]})


# -- adiabatic tracking ----------------------------------------------------

def _lattice_index(n, t):
    return int(math.ceil(n * t - 1e-12))


def run_adiabatic(cfg: ExperimentConfig) -> ExperimentResult:
    """Distance from the pushed-forward density h_{n,k} to the SRB density at alpha_{n,k}."""
    s, grid, f = cfg.section, cfg.grid, cfg.observable
    cache = _cache(cfg)
    t_values = sorted(float(t) for t in s.t_values)
    rows, dist, mean_gap = [], {}, {}
    for n in cfg.levels:
        row = build_row(cfg.curve, n)
        ks = [_lattice_index(n, t) for t in t_values]
        wanted = set(ks)
        d = GridDensity.uniform(grid)
        found = {}
        for k in range(1, max(ks) + 1):
            d = apply_density(cache.operator(row[k], grid), d)
            if k in wanted:
                srb = cache.srb(row[k], grid)
                found[k] = (l1_distance(d, srb), abs(d.integrate(f) - srb.integrate(f)))
        for t, k in zip(t_values, ks):
            dist[(t, n)], mean_gap[(t, n)] = found[k]
            rows.append([n, k, found[k][0]])
    violations = []
    for t in t_values:
        seq = [dist[(t, n)] for n in cfg.levels]
        if not _strictly_decreasing(seq):
            violations.append(f"t={t}: l1_to_instant_srb not strictly decreasing in n")
        gaps = [mean_gap[(t, n)] for n in cfg.levels]
        if not _strictly_decreasing(gaps):
            violations.append(f"t={t}: observable-mean gap not strictly decreasing in n")
    return ExperimentResult(
        "adiabatic", ["n", "k", "l1_to_instant_srb"], rows, violations,
        {"observable_mean_gap": {f"t={t},n={n}": v for (t, n), v in mean_gap.items()}})


# -- multiple correlations -------------------------------------------------

def _correlation_setup(cfg):
    s = cfg.section
    f0 = ObservableSpec.from_dict(s.f0) if s.f0 else ObservableSpec.constant(1.0)
    if s.observables is None:
        fs_tail = [cfg.observable] * s.k
    else:
        fs_tail = [ObservableSpec.from_dict(o) for o in s.observables]
    return [f0] + fs_tail


def _correlation_times(s, gap):
    base = [int(x) for x in s.base_times]
    anchor = base[-1] if base else 0
    nxt = anchor + int(gap)
    return base + [nxt] + [nxt + int(o) for o in s.tail_offsets]


def run_correlation(cfg: ExperimentConfig) -> ExperimentResult:
    """|int G_m F_m dmu - int G_m dmu int F_m dmu| by transfer operators and by Monte Carlo."""
    s, grid, b, tol = cfg.section, cfg.grid, cfg.beta_star, cfg.tolerances
    fs = _correlation_setup(cfg)
    gaps = sorted(int(g) for g in s.gaps)
    times = {g: _correlation_times(s, g) for g in gaps}
    if any(t != sorted(t) for t in times.values()):
        raise ValueError("correlation times must be nondecreasing")
    level = s.level if s.level is not None else max(max(t) for t in times.values())
    if level < max(max(t) for t in times.values()):
        raise ValueError("correlation.level is shorter than the largest time")
    alphas = build_row(cfg.curve, level)[1:]
    cache = _cache(cfg)
    h = GridDensity.uniform(grid)
    rows, route_a, route_b = [], [], []
    violations = []
    for g in gaps:
        ns = times[g]
        a = operator_correlation(alphas, fs, ns, s.m, h, cache)
        est, se = correlation_functional(MapSequence(tuple(alphas), b), fs, level, [0] + ns, s.m + 1,
                                         cfg.samples, cfg.seed, cfg.threads)
        route_a.append(a)
        route_b.append((est, se))
        rows.append([s.m, g, abs(a), rho(g, b)])
        if abs(a - est) > tol.agreement_se * se + 1e-12:
            violations.append(f"gap={g}: routes disagree ({a:.6g} vs {est:.6g} +- {se:.3g})")
    measured = [abs(a) for a in route_a]
    if any(y > x + 1e-15 for x, y in zip(measured, measured[1:])):
        violations.append("measured correlation increases with the gap")
    shapes = [rho(g, b) for g in gaps]
    c, bad = _dominated(measured, shapes, tol.domination_slack, 0)
    violations += [f"gap={gaps[i]}: exceeds fitted C*rho(gap)" for i in bad]
    return ExperimentResult(
        "correlation", ["m", "gap", "measured", "bound_shape"], rows, violations,
        {"operator_route": route_a, "monte_carlo": [list(x) for x in route_b],
         "fitted_C": c, "times": {str(g): times[g] for g in gaps}})


# -- ergodic theorem -------------------------------------------------------

def run_ergodic(cfg: ExperimentConfig) -> ExperimentResult:
    """Ensemble statistics of sup_t |zeta_n - zeta| across the levels."""
    s, f = cfg.section, cfg.observable
    cache = _cache(cfg)
    eps = sorted(float(e) for e in s.eps)
    zeta_ref = lambda t: limit_zeta(cfg.curve, f, cfg.grid, s.n_quad, t, cache)  # noqa: E731
    results = [ensemble_sup_deviation(cfg.curve, f, n, cfg.samples, cfg.seed, s.t_points, eps,
                                      cfg.grid, s.n_quad, cfg.threads, cache, zeta_ref)
               for n in cfg.levels]
    cols = ["n", "median_sup_dev"] + [f"p_exceed_{e:g}" for e in eps]
    rows = [[r.n, r.quantiles[0.5]] + [r.prob_exceed[e] for e in eps] for r in results]
    violations = []
    for e in eps:
        p = [r.prob_exceed[e] for r in results]
        if any(y > x for x, y in zip(p, p[1:])):
            violations.append(f"p_exceed({e:g}) increases across levels: {p}")
    devs = np.array([r.sup_devs for r in results])
    summary = {
        "quantiles": {str(r.n): r.quantiles for r in results},
        "grid_slack": {str(r.n): r.grid_slack for r in results},
    }
    if len(results) >= 2:
        second = devs**2
        summary["second_moment"] = second.mean(axis=1).tolist()
        summary["second_moment_slope"] = loglog_slope(cfg.levels, second.mean(axis=1))
        summary["fraction_decreasing_last_pair"] = float(np.mean(devs[-1] < devs[-2]))
        summary["fraction_decreasing_all"] = float(np.mean(np.all(np.diff(devs, axis=0) < 0, axis=0)))
    return ExperimentResult("ergodic", cols, rows, violations, summary)


# -- cone and SRB checks ---------------------------------------------------

def run_cone_check(cfg: ExperimentConfig) -> ExperimentResult:
    """Push random cone densities through random admissible operators and recheck membership."""
    s, grid, b = cfg.section, cfg.grid, cfg.beta_star
    params = ConeParams(b)
    eps = cfg.tolerances.eps_cone if cfg.tolerances.eps_cone is not None else 1e-6 + 2.0 / grid.n_cells
    rng = np.random.default_rng(cfg.seed)
    rows, violations = [], []
    for trial in range(s.trials):
        d = random_cone_density(rng, grid, b, s.terms)
        alpha = float(rng.uniform(0.0, b))
        before = cone_membership(d, params, eps)
        after = cone_membership(apply_density(build_ulam(PMMap(alpha), grid), d), params, eps)
        rows.append([trial, alpha, int(before.passes), int(after.passes), *after.margins])
        if not after.passes:
            violations.append(f"trial {trial}: pushforward at alpha={alpha:.6g} leaves the cone")
    cols = ["trial", "alpha", "passes_before", "passes_after", "margin_nonnegative",
            "margin_decreasing", "margin_weighted_increasing", "margin_upper_bound"]
    return ExperimentResult("cone-check", cols, rows, violations, {"eps_cone": eps})


def run_srb(cfg: ExperimentConfig) -> ExperimentResult:
    """Ulam SRB density of T_alpha with residual, monotonicity and cone-bound diagnostics."""
    alpha, grid, tol = cfg.section.alpha, cfg.grid, cfg.tolerances
    d, resid, iters = power_iterate(build_ulam(PMMap(alpha), grid), tol.srb_tol, tol.srb_max_iter)
    margin = srb_bound_margin(d, alpha, tol.eps_grid)
    rows = [[i, x, v] for i, (x, v) in enumerate(zip(grid.left, d.values))]
    violations = []
    if margin < 0:
        violations.append(f"cone bound violated by {-margin:.6g}")
    decreasing = bool(np.all(np.diff(d.values) <= 1e-12))
    if not decreasing:
        violations.append("SRB density is not decreasing across cells")
    summary = {"residual": resid, "iterations": iters, "mass": d.mass, "bound_margin": margin,
               "observable_mean": d.integrate(cfg.observable)}
    return ExperimentResult("srb", ["cell", "x_left", "density"], rows, violations, summary)


RUNNERS = {
    "decay": run_decay,
    "perturb": run_perturb,
    "adiabatic": run_adiabatic,
    "correlation": run_correlation,
    "ergodic": run_ergodic,
    "cone-check": run_cone_check,
    "srb": run_srb,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    return RUNNERS[cfg.experiment](cfg)


# -- output ----------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def csv_text(result: ExperimentResult) -> str:
    lines = [",".join(result.columns)]
    lines += [",".join(_fmt(v) for v in row) for row in result.rows]
    lines += [f"# violation: {v}" for v in result.violations]
    return "\n".join(lines) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def manifest_path(csv_path) -> Path:
    p = Path(csv_path)
    return p.with_name(p.stem + ".manifest.json")


def write_result(result: ExperimentResult, cfg: ExperimentConfig, path=None) -> Path:
    """Write the CSV and its manifest (config echo, version, seed, summary)."""
    out = Path(path if path is not None else cfg.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(csv_text(result))
    manifest = {
        "experiment": result.experiment,
        "version": __version__,
        "seed": cfg.seed,
        "threads": cfg.threads,
        "config": cfg.raw,
        "summary": result.summary,
        "violations": result.violations,
    }
    manifest_path(out).write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")
    return out
