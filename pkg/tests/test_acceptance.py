"""Acceptance gate: one test per criterion, each reporting a PASS/FAIL line.

Lines are printed as they are produced and collected into the pytest
terminal summary.
"""

import time
from pathlib import Path

import numpy as np
import pytest

from qds.config import load_config
from qds.cone import (ConeParams, cone_membership, nested_product, random_cone_density,
                      recursive_decompose, srb_bound_margin)
from qds.experiments import csv_text, run_experiment
from qds.observables import ObservableSpec
from qds.pm_map import PMMap, evaluate, evaluate_batch, left_preimage, left_preimage_batch
from qds.rates import loglog_slope
from qds.transfer_op import (Grid, GridDensity, apply_density, build_ulam, compose_apply,
                             l1_distance, power_iterate)

from .conftest import ACCEPTANCE_LINES
from .oracles import cell_averaged_transfer, orbit_histogram

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


class Gate:
    """Collects checks for one criterion and reports them on one line."""

    def __init__(self, number, title, limit_s):
        self.number, self.title, self.limit = number, title, limit_s
        self.failures, self.notes = [], []
        self.start = time.perf_counter()

    def check(self, ok, what):
        if not ok:
            self.failures.append(what)

    def note(self, text):
        self.notes.append(text)

    def finish(self):
        elapsed = time.perf_counter() - self.start
        self.check(elapsed < self.limit, f"runtime {elapsed:.1f}s over {self.limit}s")
        status = "PASS" if not self.failures else "FAIL"
        detail = "; ".join(self.notes + [f"failed: {f}" for f in self.failures])
        line = f"[{self.number:>2}] {status} {self.title} ({elapsed:.2f}s/{self.limit}s) {detail}"
        print(line)
        ACCEPTANCE_LINES.append(line)
        assert not self.failures, line


def test_criterion_01_map_and_preimage():
    g = Gate(1, "map/preimage round trips", 1.0)
    rng = np.random.default_rng(101)
    a = rng.random(10_000)
    x = rng.random(10_000)
    resid = float(np.max(np.abs(evaluate_batch(a, left_preimage_batch(a, x, 1e-13)) - x)))
    g.check(resid <= 1e-12, f"round trip residual {resid:.2e}")
    g.note(f"max residual {resid:.1e}")
    z = rng.random(1000)
    doubling = PMMap(0.0)
    g.check(np.array_equal(evaluate(doubling, z), np.where(z < 0.5, 2 * z, 2 * z - 1)),
            "alpha=0 evaluate not exact doubling")
    g.check(np.array_equal(left_preimage(doubling, z), z / 2), "alpha=0 preimage not exact")
    g.finish()


def test_criterion_02_operator_conservation():
    g = Gate(2, "operator mass and positivity", 5.0)
    rng = np.random.default_rng(202)
    N = 1024
    worst = 0.0
    for trial in range(100):
        alpha = rng.random()
        if trial % 2:
            d = random_cone_density(rng, N, 0.5)
        else:
            d = GridDensity(Grid.uniform(N), rng.random(N) * rng.uniform(0.1, 5.0))
        out = apply_density(build_ulam(PMMap(alpha), N), d)
        worst = max(worst, abs(out.mass - d.mass))
        g.check(out.values.min() >= 0, f"negative value at alpha={alpha:.4f}")
    g.check(worst <= 1e-12, f"mass drift {worst:.2e}")
    d = GridDensity.uniform(N)
    g.check(compose_apply([], N, d).values is d.values, "empty composition is not identity")
    g.note(f"max mass drift {worst:.1e}")
    g.finish()


def test_criterion_03_ulam_vs_exact():
    g = Gate(3, "Ulam vs exact transfer at N=4096", 30.0)
    N = 4096
    grid = Grid.uniform(N)
    smooth = [lambda x: 1.0 + 0.5 * np.cos(3 * x), lambda x: np.exp(-x) + x**2]
    for alpha in (0.1, 0.5, 0.75):
        op = build_ulam(PMMap(alpha), grid)
        for f in smooth:
            dist = l1_distance(apply_density(op, GridDensity.from_function(grid, f)),
                               cell_averaged_transfer(alpha, f, grid))
            g.check(dist <= 5 / N, f"alpha={alpha}: distance {dist:.2e} > 5/N")
            g.note(f"a={alpha}:{dist:.1e}")
    g.finish()


def test_criterion_04_srb_sanity():
    g = Gate(4, "SRB densities", 60.0)
    d0, _, _ = power_iterate(build_ulam(PMMap(0.0), 64))
    g.check(np.max(np.abs(d0.values - 1)) <= 1e-10, "alpha=0 SRB not uniform")
    grid = Grid.uniform(2048)
    d, _, _ = power_iterate(build_ulam(PMMap(0.5), grid))
    hist = orbit_histogram(0.5, grid, 10_000_000, seed=44)
    dist = l1_distance(d, hist)
    g.check(dist <= 0.05, f"histogram distance {dist:.3f}")
    g.check(bool(np.all(np.diff(d.values) <= 0)), "not decreasing")
    margin = srb_bound_margin(d, 0.5, 0.05)
    g.check(margin >= 0, f"cone bound margin {margin:.3g}")
    g.note(f"histogram L1 {dist:.4f}, bound margin {margin:.3f}")
    g.finish()


def test_criterion_05_cone_invariance():
    g = Gate(5, "cone invariance under L_alpha", 30.0)
    rng = np.random.default_rng(505)
    N = 1024
    params = ConeParams(0.5)
    eps = 1e-6 + 2 / N
    worst = np.inf
    for _ in range(20):
        d = random_cone_density(rng, N, 0.5)
        alpha = rng.uniform(0.0, 0.5)
        rep = cone_membership(apply_density(build_ulam(PMMap(alpha), N), d), params, eps)
        worst = min(worst, min(rep.margins))
        g.check(rep.passes, f"alpha={alpha:.4f} margins {rep.margins}")
    g.note(f"smallest margin {worst:.2e} (eps {eps:.1e})")
    g.finish()


def test_criterion_06_decomposition():
    g = Gate(6, "recursive cone decomposition k=1,2,3", 60.0)
    N = 2048
    grid = Grid.uniform(N)
    params = ConeParams(0.5)
    eps = 1e-9 + 2 / N
    fs = [ObservableSpec("trigonometric", (0.0, 1.0, 0.0)),
          ObservableSpec("affine", (-0.5, 1.0)),
          ObservableSpec("polynomial", (0.2, -1.0, 1.5))]
    gaps = [[0.25], [0.1, 0.3, 0.5]]
    for h in (GridDensity.uniform(grid), GridDensity.power_profile(grid, 0.4)):
        for k in (1, 2, 3):
            dec = recursive_decompose(fs[:k], h, gaps[:k - 1], params)
            ref = nested_product(fs[:k], h, gaps[:k - 1])
            scale = max(np.abs(p.values).max() for p in dec.pieces)
            err = np.abs(dec.signed_sum().values - ref.values).max() / scale
            g.check(len(dec.pieces) == 2**k, "wrong piece count")
            g.check(err <= 1e-9, f"k={k}: reconstruction {err:.1e}")
            g.check(all(cone_membership(p, params, eps).passes for p in dec.pieces),
                    f"k={k}: piece outside cone")
            g.check(max(p.mass for p in dec.pieces) < dec.budget, f"k={k}: mass budget")
    cos = fs[0]
    h = GridDensity.uniform(grid)
    dec = recursive_decompose([cos, cos], h, [[0.25]], params)
    oracle = cell_averaged_transfer(0.25, lambda x: np.cos(np.pi * x), grid)
    expected = GridDensity(grid, cos(grid.midpoints) * oracle.values)
    dist = l1_distance(dec.signed_sum(), expected)
    g.check(dist <= 5 / N, f"exact-transfer cross check {dist:.2e}")
    g.note(f"k=2 oracle distance {dist:.1e}")
    g.finish()


def test_criterion_07_memory_loss():
    g = Gate(7, "memory loss vs rho(n)", 300.0)
    cfg = load_config(CONFIGS / "decay.yaml")
    res = run_experiment(cfg)
    dists = [r[1] for r in res.rows]
    slope = res.summary["slope"]
    g.check(res.ok, "; ".join(res.violations))
    g.check(-4.0 <= slope <= -1.5, f"slope {slope:.3f}")
    g.note(f"{cfg.grid.key[0]} grid, slope {slope:.3f}, C0 {res.summary['fitted_C0']:.3f}, "
           f"distances {dists[0]:.2e}..{dists[-1]:.2e}")
    # the same chain on a uniform grid, for the record only
    N = 4096
    grid = Grid.uniform(N)
    op = build_ulam(PMMap(0.25), grid)
    d = GridDensity.uniform(grid) - GridDensity.power_profile(grid, 0.25)
    uni = []
    for n in range(1, 1025):
        d = apply_density(op, d)
        if n in (16, 32, 64, 128, 256, 512, 1024):
            uni.append(l1_distance(d, GridDensity.zeros(grid)))
    g.note(f"uniform-grid slope {loglog_slope([16, 32, 64, 128, 256, 512, 1024], uni):.1f} (not gated)")
    g.finish()


def test_criterion_08_perturbation():
    g = Gate(8, "parameter continuity", 300.0)
    res = run_experiment(load_config(CONFIGS / "perturb.yaml"))
    op = [r[2] for r in res.rows]
    srb = [r[3] for r in res.rows]
    g.check(all(b < a for a, b in zip(op, op[1:])), "op_dist not strictly decreasing")
    g.check(all(b < a for a, b in zip(srb, srb[1:])), "srb_dist not strictly decreasing")
    g.check(res.ok, "; ".join(res.violations))
    g.note(f"op {op[0]:.2e}..{op[-1]:.2e}, srb {srb[0]:.2e}..{srb[-1]:.2e}")
    g.finish()


def test_criterion_09_adiabatic():
    g = Gate(9, "adiabatic tracking at t=0.5", 600.0)
    cfg = load_config(CONFIGS / "adiabatic.yaml")
    res = run_experiment(cfg)
    mid = [r[2] for r in res.rows if r[1] == int(np.ceil(r[0] * 0.5))]
    g.check(len(mid) == 3, "missing t=0.5 rows")
    g.check(all(b < a for a, b in zip(mid, mid[1:])), f"not decreasing: {mid}")
    g.check(res.ok, "; ".join(res.violations))
    g.note("distances " + ", ".join(f"{v:.2e}" for v in mid))
    g.finish()


def test_criterion_10_ergodic():
    g = Gate(10, "ergodic convergence, case beta_*=0.25", 900.0)
    cfg = load_config(CONFIGS / "ergodic_case_ii.yaml")
    res = run_experiment(cfg)
    p = [r[2] for r in res.rows]
    g.check(p[-1] <= 0.1, f"p_exceed at n=1e4 is {p[-1]}")
    g.check(all(b <= a for a, b in zip(p, p[1:])), f"p_exceed increases: {p}")
    from qds.ergodic import ensemble_sup_deviation
    const = ensemble_sup_deviation(cfg.curve, ObservableSpec.constant(1.0), 10_000,
                                   cfg.samples, cfg.seed)
    g.check(bool(np.all(const.sup_devs == 0)), "constant observable deviates")
    g.note("p_exceed " + ", ".join(f"{v:g}" for v in p))
    g.finish()


def _small(cfg, **section):
    for k, v in section.items():
        setattr(cfg, k, v)
    return cfg


def test_criterion_11_determinism():
    g = Gate(11, "thread-count independence of CSV bodies", 300.0)
    runs = {
        "ergodic": _small(load_config(CONFIGS / "ergodic_case_ii.yaml"), levels=[100, 1000],
                          samples=2500),
        "correlation": _small(load_config(CONFIGS / "correlation.yaml"), samples=5000),
        "perturb": load_config(CONFIGS / "perturb.yaml"),
        "decay": _small(load_config(CONFIGS / "decay.yaml"), levels=[16, 32, 64]),
        "cone-check": load_config(CONFIGS / "cone_check.yaml"),
    }
    for name, cfg in runs.items():
        one = csv_text(run_experiment(cfg.with_overrides(threads=1)))
        eight = csv_text(run_experiment(cfg.with_overrides(threads=8)))
        g.check(one == eight, f"{name} differs between 1 and 8 threads")
    g.note("checked " + ", ".join(runs))
    g.finish()
