"""Quasistatic time averages, their limit, ensemble statistics and correlations.

Monte-Carlo orbits are driven by per-block random streams: sample i lives
in block i // BLOCK and block b draws from ``default_rng([seed, b])``.  Each
block always draws a full BLOCK of variates, so sample i sees the same
numbers whatever M or the number of worker threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import DomainError
from .observables import ObservableSpec
from .param_curve import PiecewiseHolderCurve, build_row, sample_curve
from .pm_map import MapSequence, walk
from .transfer_op import (GridDensity, OperatorCache, as_grid, compose_apply,
                          default_cache)

BLOCK = 1024
QUANTILE_LEVELS = (0.1, 0.25, 0.5, 0.75, 0.9)


# -- random streams --------------------------------------------------------

def _block_counts(M):
    full, rest = divmod(M, BLOCK)
    return [BLOCK] * full + ([rest] if rest else [])


def map_blocks(M: int, seed: int, work: Callable, threads: int = 1) -> list:
    """Run ``work(rng, block_index, count)`` for every block, results in block order."""
    if M < 1:
        raise ValueError("M must be >= 1")
    jobs = [(b, c) for b, c in enumerate(_block_counts(M))]

    def run(job):
        b, c = job
        return work(np.random.default_rng([int(seed), b]), b, c)

    if threads <= 1 or len(jobs) == 1:
        return [run(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run, jobs))


def _draw(rng, count):
    return rng.random(BLOCK)[:count]


def sample_from_density(h: GridDensity | None, u):
    """Inverse-CDF transform of uniforms ``u`` to the piecewise-constant law h."""
    if h is None:
        return np.asarray(u, dtype=float)
    w = h.values * h.grid.widths
    if np.any(w < 0):
        raise ValueError("sampling density must be nonnegative")
    cdf = np.concatenate([[0.0], np.cumsum(w)])
    cdf /= cdf[-1]
    i = np.clip(np.searchsorted(cdf, u, side="right") - 1, 0, h.n_cells - 1)
    cell_mass = cdf[i + 1] - cdf[i]
    frac = np.where(cell_mass > 0, (u - cdf[i]) / np.where(cell_mass > 0, cell_mass, 1.0), 0.5)
    return h.grid.edges[i] + frac * h.grid.widths[i]


def _row_alphas(source, n):
    """alpha_{n,1..n} for a curve, a MapSequence or a constant."""
    if isinstance(source, PiecewiseHolderCurve):
        return build_row(source, n)[1:]
    if isinstance(source, MapSequence):
        if len(source) < n:
            raise IndexError(f"sequence of length {len(source)} shorter than {n}")
        return np.asarray(source.alphas[:n])
    return np.full(n, float(source))


# -- zeta_n and zeta -------------------------------------------------------

def _lattice(n, t):
    nt = n * np.asarray(t, dtype=float)
    j = np.floor(nt).astype(np.int64)
    return j, nt - j


def _check_t(t_grid):
    t = np.asarray(t_grid, dtype=float)
    if np.any(~(t >= 0.0) | ~(t <= 1.0)):
        raise DomainError("t values must lie in [0, 1]")
    if np.any(np.diff(t) < 0):
        raise DomainError("t_grid must be sorted")
    return t


def _accumulate(fvals_iter, n, j, frac):
    """(1/n)[sum_{k<=j} f_k + frac f_{j+1}] for every (j, frac), streaming over k."""
    # t-points grouped by the step that completes their running sum or fractional term
    need_sum, need_frac = {}, {}
    for i, (jj, fr) in enumerate(zip(j.tolist(), frac.tolist())):
        need_sum.setdefault(jj, []).append(i)
        if fr > 0:
            need_frac.setdefault(jj + 1, []).append(i)
    out = running = None
    for k, fk in enumerate(fvals_iter, start=1):
        if out is None:
            running = np.zeros_like(fk)
            out = np.zeros((len(j),) + np.shape(fk))
        running = running + fk
        for i in need_sum.get(k, ()):
            out[i] += running
        for i in need_frac.get(k, ()):
            out[i] += frac[i] * fk
        if k == n:
            break
    return out / n


def zeta_n(curve: PiecewiseHolderCurve, f: ObservableSpec, n: int, x: float, t_grid) -> np.ndarray:
    """zeta_n(x, t) = (1/n)[sum_{k=1}^{floor(nt)} f(x_k) + (nt - floor(nt)) f(x_{ceil(nt)})].

    The orbit x_{n,1..n} follows row n of the curve from x_{n,0} = x.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    t = _check_t(t_grid)
    if not (0.0 <= x <= 1.0):
        raise DomainError("x must lie in [0, 1]")
    if f.is_constant:
        return f.constant_value * t
    j, frac = _lattice(n, t)
    alphas = _row_alphas(curve, n)
    vals = (f(xk) for xk in walk(alphas, np.array([float(x)])))
    return _accumulate(vals, n, j, frac)[:, 0]


def srb_mean(alpha: float, f: ObservableSpec, grid_or_n, cache: OperatorCache | None = None) -> float:
    """mu_alpha(f) as the grid pairing sum_i f(mid_i) h_alpha[i] |I_i|."""
    if f.is_constant:
        return f.constant_value
    cache = default_cache if cache is None else cache
    return cache.srb(alpha, grid_or_n).integrate(f)


def limit_zeta(curve: PiecewiseHolderCurve, f: ObservableSpec, N, n_quad: int, t_grid,
               cache: OperatorCache | None = None) -> np.ndarray:
    """zeta(t) = int_0^t mu_{gamma_s}(f) ds by composite midpoint quadrature.

    Every regularity interval gets ceil(n_quad * length) cells; inside a cell
    the integral is interpolated linearly, which is exact for the midpoint
    rule's piecewise-constant integrand.
    """
    if n_quad < 16:
        raise ValueError("n_quad must be >= 16")
    t = _check_t(t_grid)
    if f.is_constant:
        return f.constant_value * t
    edges = []
    for lo, hi in zip(curve.breakpoints[:-1], curve.breakpoints[1:]):
        m = max(1, math.ceil(n_quad * (hi - lo)))
        edges.append(np.linspace(lo, hi, m + 1)[:-1])
    edges = np.concatenate(edges + [[1.0]])
    mids = 0.5 * (edges[:-1] + edges[1:])
    # sample at midpoints so a breakpoint never picks the wrong side
    alphas = sample_curve(curve, mids)
    means = np.array([srb_mean(a, f, N, cache) for a in alphas])
    cum = np.concatenate([[0.0], np.cumsum(means * np.diff(edges))])
    return np.interp(t, edges, cum)


# -- ensembles -------------------------------------------------------------

@dataclass
class EnsembleResult:
    n: int
    sample_count: int
    sup_devs: np.ndarray
    quantiles: dict
    prob_exceed: dict
    grid_slack: float
    t_points: int = 0
    extra: dict = field(default_factory=dict)


def _ensemble_block(alphas, f, n, j, frac, zeta_ref, rng, count):
    x0 = _draw(rng, count)
    step_rng = lambda step: _draw(rng, count)  # noqa: E731
    vals = (f(xk) for xk in walk(alphas, x0, refill=step_rng))
    zn = _accumulate(vals, n, j, frac)
    return np.max(np.abs(zn - zeta_ref[:, None]), axis=0)


def ensemble_sup_deviation(curve: PiecewiseHolderCurve, f: ObservableSpec, n: int, M: int,
                           seed: int, t_points: int | None = None,
                           eps_list: Sequence[float] = (0.05,), N=2048, n_quad: int = 64,
                           threads: int = 1, cache: OperatorCache | None = None,
                           zeta_ref: Callable | None = None) -> EnsembleResult:
    """sup_t |zeta_n(x, t) - zeta(t)| for M uniform initial points.

    The sup is taken over ``t_points`` equispaced times (default
    min(n, 512) + 1); the true sup exceeds the grid sup by at most
    ||f||_inf / (t_points - 1).  ``zeta_ref`` may supply a precomputed
    t -> zeta(t) to share quadrature across levels.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    T = min(n, 512) + 1 if t_points is None else int(t_points)
    if T < 2:
        raise ValueError("t_points must be >= 2")
    i = np.arange(T, dtype=np.int64)
    # exact lattice positions n * i / (T - 1)
    j = (n * i) // (T - 1)
    frac = ((n * i) % (T - 1)) / (T - 1)
    t = i / (T - 1)
    if f.is_constant:
        sup_devs = np.zeros(M)
    else:
        zeta = zeta_ref(t) if zeta_ref is not None else limit_zeta(curve, f, N, n_quad, t, cache)
        alphas = _row_alphas(curve, n)
        parts = map_blocks(M, seed, lambda rng, b, c: _ensemble_block(
            alphas, f, n, j, frac, np.asarray(zeta), rng, c), threads)
        sup_devs = np.concatenate(parts)
    quant = {q: float(np.quantile(sup_devs, q)) for q in QUANTILE_LEVELS}
    prob = {float(e): float(np.mean(sup_devs >= e)) for e in sorted(eps_list)}
    return EnsembleResult(n=n, sample_count=M, sup_devs=sup_devs, quantiles=quant,
                          prob_exceed=prob, grid_slack=f.sup_norm / (T - 1), t_points=T)


# -- correlations ----------------------------------------------------------

def _as_list(f, count):
    if isinstance(f, ObservableSpec):
        return [f] * count
    fs = list(f)
    if len(fs) != count:
        raise ValueError(f"expected {count} observables, got {len(fs)}")
    return fs


def _check_ks(ks, j, n):
    ell = len(ks)
    if not (2 <= ell <= 4):
        raise ValueError("between 2 and 4 indices are required")
    if j not in (1, ell - 1):
        raise ValueError("j must be 1 or len(ks) - 1")
    if any(b < a for a, b in zip(ks, ks[1:])) or ks[0] < 0 or ks[-1] > n:
        raise ValueError("ks must be sorted within [0, n]")


def split_products(alphas, fs, ks, split, x0, refill=None):
    """(P, Q) with P = prod_{i<split} f_i(x_{k_i}), Q = prod_{i>=split} f_i(x_{k_i})."""
    P = np.ones_like(x0)
    Q = np.ones_like(x0)
    x = x0
    targets = {}
    for idx, k in enumerate(ks):
        targets.setdefault(k, []).append(idx)

    def absorb(step, state):
        nonlocal P, Q
        for idx in targets.get(step, ()):
            v = fs[idx](state)
            if idx < split:
                P = P * v
            else:
                Q = Q * v

    absorb(0, x)
    last = max(ks)
    if last > 0:
        for step, x in enumerate(walk(alphas[:last], x0, refill=refill), start=1):
            absorb(step, x)
    return P, Q


def covariance_estimate(P, Q):
    """Sample mean(PQ) - mean(P) mean(Q) and its delta-method standard error."""
    M = len(P)
    est = float(np.mean(P * Q) - np.mean(P) * np.mean(Q))
    if M < 2:
        return est, float("inf")
    se = float(np.std((P - P.mean()) * (Q - Q.mean()), ddof=1) / math.sqrt(M))
    return est, se


def monte_carlo_split(source, fs, ks, split, n, M, seed, h: GridDensity | None = None,
                      threads: int = 1):
    """Samples of (P, Q) along row n of ``source`` from initial law h (default Lebesgue)."""
    alphas = _row_alphas(source, n)

    def block(rng, b, count):
        x0 = sample_from_density(h, _draw(rng, count))
        return split_products(alphas, fs, ks, split, x0, refill=lambda s: _draw(rng, count))

    parts = map_blocks(M, seed, block, threads)
    return np.concatenate([p for p, _ in parts]), np.concatenate([q for _, q in parts])


def correlation_functional(source, f, n: int, ks: Sequence[int], j: int, M: int, seed: int,
                           threads: int = 1, h: GridDensity | None = None):
    """Monte-Carlo c^{l,j}_n(k_1..k_l) = mu(prod f_{n,k_i}) - mu(first j) mu(rest).

    ``source`` is a curve, a MapSequence or a constant alpha; ``f`` is one
    observable or one per index.  Returns (estimate, standard error).
    """
    ks = [int(k) for k in ks]
    _check_ks(ks, j, n)
    fs = _as_list(f, len(ks))
    P, Q = monte_carlo_split(source, fs, ks, j, n, M, seed, h, threads)
    return covariance_estimate(P, Q)


def operator_chain_integral(alphas, fs, ns, h: GridDensity,
                            cache: OperatorCache | None = None) -> float:
    """int f_k o T~_{n_k} ... f_1 o T~_{n_1} . f_0 . h dx by transfer operators.

    Uses the duality int (g o T~) psi = int g L~ psi: push psi = f_0 h forward
    block by block, multiplying by f_i after reaching time n_i.
    ``fs`` has one more entry than ``ns`` (f_0 acts at time 0).
    """
    if len(fs) != len(ns) + 1:
        raise ValueError("need one observable per time plus f_0")
    x = h.grid.midpoints
    psi = GridDensity(h.grid, fs[0](x) * h.values)
    prev = 0
    for fi, ni in zip(fs[1:], ns):
        if ni < prev:
            raise ValueError("times must be nondecreasing")
        psi = compose_apply(list(alphas[prev:ni]), h.grid, psi, cache)
        psi = GridDensity(h.grid, fi(x) * psi.values)
        prev = ni
    return psi.integrate()


def operator_correlation(alphas, fs, ns, m: int, h: GridDensity,
                         cache: OperatorCache | None = None) -> float:
    """int G_m F_m h - int G_m h int F_m h with F_m = f_0..f_m and G_m = f_{m+1}..f_k."""
    one = ObservableSpec.constant(1.0)
    whole = operator_chain_integral(alphas, fs, ns, h, cache)
    f_part = operator_chain_integral(alphas, fs[: m + 1], ns[:m], h, cache)
    g_fs = [one] * (m + 1) + list(fs[m + 1:])
    g_part = operator_chain_integral(alphas, g_fs, ns, h, cache)
    return whole - g_part * f_part
