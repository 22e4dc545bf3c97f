"""Transfer operators of Pomeau-Manneville maps: pointwise and Ulam-discretized.

Densities live on a partition of [0, 1] into N cells and are stored as cell
averages.  The partition is uniform by default.  A graded partition
(geometric cells accumulating at the neutral fixed point) is available for
experiments that need to resolve orbits lingering near 0 for hundreds of
steps; a uniform partition of width 1/N cannot hold mass there for longer
than about N^alpha steps.
"""

from __future__ import annotations

import functools
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import AdmissibilityError, ConvergenceError, DimensionError
from .pm_map import PMMap, left_preimage

ALPHA_QUANTUM = 1e-4
_QUANTA_PER_UNIT = 10_000


class Grid:
    """A partition 0 = e_0 < e_1 < ... < e_N = 1 of the unit interval."""

    def __init__(self, edges, key):
        edges = np.asarray(edges, dtype=float)
        if edges[0] != 0.0 or edges[-1] != 1.0 or np.any(np.diff(edges) <= 0):
            raise ValueError("grid edges must increase strictly from 0 to 1")
        edges.setflags(write=False)
        self.edges = edges
        self.key = key
        self.widths = np.diff(edges)
        self.left = edges[:-1]
        self.right = edges[1:]
        self.midpoints = 0.5 * (self.left + self.right)
        for a in (self.widths, self.midpoints):
            a.setflags(write=False)

    @property
    def n_cells(self):
        return len(self.widths)

    @property
    def is_uniform(self):
        return self.key[0] == "uniform"

    def __eq__(self, other):
        return isinstance(other, Grid) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __repr__(self):
        return f"Grid{self.key}"

    @staticmethod
    @functools.lru_cache(maxsize=64)
    def uniform(n_cells: int) -> "Grid":
        if n_cells < 2:
            raise ValueError("a grid needs at least two cells")
        edges = np.arange(n_cells + 1) / n_cells
        return Grid(edges, ("uniform", int(n_cells)))

    @staticmethod
    @functools.lru_cache(maxsize=64)
    def graded(n_cells: int, x_min: float = 1e-14, graded_fraction: float = 0.25,
               x_join: float = 1.0 / 64) -> "Grid":
        """[0, x_min], then geometric cells up to x_join, then uniform cells up to 1."""
        n_geo = int(round(graded_fraction * n_cells))
        n_uni = n_cells - n_geo - 1
        if n_geo < 1 or n_uni < 1 or not (0.0 < x_min < x_join < 1.0):
            raise ValueError("graded grid parameters leave no room for both regions")
        geo = np.geomspace(x_min, x_join, n_geo + 1)
        uni = np.linspace(x_join, 1.0, n_uni + 1)
        edges = np.concatenate([[0.0], geo, uni[1:]])
        edges[-1] = 1.0
        return Grid(edges, ("graded", int(n_cells), float(x_min), float(graded_fraction),
                            float(x_join)))


def as_grid(grid_or_n) -> Grid:
    if isinstance(grid_or_n, Grid):
        return grid_or_n
    return Grid.uniform(int(grid_or_n))


def _gauss_cell_average(grid: Grid, fn, order: int):
    nodes, weights = np.polynomial.legendre.leggauss(order)
    x = grid.midpoints[:, None] + 0.5 * grid.widths[:, None] * nodes[None, :]
    return (fn(x) * weights[None, :]).sum(axis=1) * 0.5


@dataclass(frozen=True, eq=False)
class GridDensity:
    """Cell averages of a (possibly signed) function on ``grid``.

    Probability densities produced by this package are nonnegative with
    unit mass; signed values are allowed so that differences such as
    f - g and products f h can be pushed forward linearly.
    """

    grid: Grid
    values: np.ndarray
    mass: float = field(init=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (self.grid.n_cells,):
            raise DimensionError(
                f"expected {self.grid.n_cells} values, got shape {vals.shape}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if self.grid.is_uniform:
            m = float(np.mean(vals))
        else:
            m = float(np.dot(vals, self.grid.widths))
        object.__setattr__(self, "mass", m)

    @property
    def n_cells(self):
        return self.grid.n_cells

    @classmethod
    def uniform(cls, grid_or_n):
        grid = as_grid(grid_or_n)
        return cls(grid, np.ones(grid.n_cells))

    @classmethod
    def zeros(cls, grid_or_n):
        grid = as_grid(grid_or_n)
        return cls(grid, np.zeros(grid.n_cells))

    @classmethod
    def from_function(cls, grid_or_n, fn: Callable, order: int = 4):
        """Cell averages of ``fn`` by Gauss-Legendre quadrature on each cell."""
        grid = as_grid(grid_or_n)
        return cls(grid, _gauss_cell_average(grid, fn, order))

    @classmethod
    def power_profile(cls, grid_or_n, beta: float):
        """Exact cell averages of (1 - beta) x^{-beta}, a unit-mass cone density."""
        grid = as_grid(grid_or_n)
        e = grid.edges
        return cls(grid, np.diff(e ** (1.0 - beta)) / grid.widths)

    @classmethod
    def from_samples(cls, grid_or_n, xs):
        """Normalized histogram of points in [0, 1]."""
        grid = as_grid(grid_or_n)
        xs = np.asarray(xs, dtype=float).ravel()
        counts, _ = np.histogram(xs, bins=grid.edges)
        return cls(grid, counts / (len(xs) * grid.widths))

    def __add__(self, other):
        _same_grid(self, other)
        return GridDensity(self.grid, self.values + other.values)

    def __sub__(self, other):
        _same_grid(self, other)
        return GridDensity(self.grid, self.values - other.values)

    def scaled(self, c):
        return GridDensity(self.grid, c * self.values)

    def times(self, fn):
        """Pointwise product with a function sampled at cell midpoints."""
        return GridDensity(self.grid, fn(self.grid.midpoints) * self.values)

    def normalized(self):
        if self.mass == 0:
            raise ValueError("cannot normalize a density of zero mass")
        return self.scaled(1.0 / self.mass)

    def integrate(self, fn=None):
        """Integral of fn * density using midpoint values of fn."""
        vals = self.values if fn is None else fn(self.grid.midpoints) * self.values
        return float(np.dot(vals, self.grid.widths))

    def clamped(self, slack=1e-12):
        """Copy with rounding-level negatives set to 0; larger negatives are an error."""
        if self.values.min(initial=0.0) < -slack:
            raise ValueError(f"density has negative values below -{slack}")
        return GridDensity(self.grid, np.maximum(self.values, 0.0))


def _same_grid(d1, d2):
    if d1.grid != d2.grid:
        raise DimensionError(f"grid mismatch: {d1.grid!r} vs {d2.grid!r}")


def l1_distance(d1: GridDensity, d2: GridDensity) -> float:
    """||d1 - d2||_1 for piecewise-constant densities."""
    _same_grid(d1, d2)
    diff = np.abs(d1.values - d2.values)
    if d1.grid.is_uniform:
        return float(np.mean(diff))
    return float(np.dot(diff, d1.grid.widths))


def exact_transfer(pm: PMMap, f: Callable, x, tol=1e-13):
    """L_alpha f(x) = f(y)/T'(y) + f(x/2 + 1/2)/2, y the left-branch preimage."""
    y = np.asarray(left_preimage(pm, x, tol))
    xr = 0.5 * np.asarray(x, dtype=float) + 0.5
    # y = 1/2 is the left-branch limit here, so use the left formula throughout
    slope = 1.0 + 2.0**pm.alpha * (1.0 + pm.alpha) * y**pm.alpha
    out = f(y) / slope + 0.5 * f(xr)
    return float(out) if np.ndim(x) == 0 else out


@dataclass(frozen=True, eq=False)
class UlamOperator:
    """Row-stochastic matrix P[i, j] = m(I_i & T^{-1} I_j) / m(I_i)."""

    grid: Grid
    alpha: float
    matrix: sp.csr_matrix

    @property
    def n_cells(self):
        return self.grid.n_cells

    def dense(self):
        return self.matrix.toarray()

    def apply(self, d):
        return apply_density(self, d)

    def to_csv(self, path):
        coo = self.matrix.tocoo()
        with open(path, "w") as fh:
            fh.write(f"# N={self.n_cells} alpha={self.alpha!r} grid={self.grid.key!r}\n")
            fh.write("i,j,p\n")
            for i, j, p in zip(coo.row, coo.col, coo.data):
                fh.write(f"{i},{j},{p:.17g}\n")


def _branch_entries(preimage_edges, edges, widths):
    """Sparse entries for one monotone branch.

    preimage_edges[j] is the preimage of edges[j]; the interval between
    consecutive preimage edges is the branch preimage of target cell j.
    """
    n = len(widths)
    lo = preimage_edges[:-1]
    hi = preimage_edges[1:]
    i0 = np.clip(np.searchsorted(edges, lo, side="right") - 1, 0, n - 1)
    i1 = np.clip(np.searchsorted(edges, hi, side="left") - 1, 0, n - 1)
    cols = np.arange(n)
    rows_out, cols_out, vals_out = [], [], []
    for shift in range(int((i1 - i0).max(initial=0)) + 1):
        i = i0 + shift
        ok = i <= i1
        ii, jj = i[ok], cols[ok]
        overlap = np.minimum(hi[ok], edges[ii + 1]) - np.maximum(lo[ok], edges[ii])
        pos = overlap > 0
        rows_out.append(ii[pos])
        cols_out.append(jj[pos])
        vals_out.append(overlap[pos] / widths[ii[pos]])
    return rows_out, cols_out, vals_out


def build_ulam(pm, grid_or_n) -> UlamOperator:
    """Ulam matrix of T_alpha on ``grid_or_n`` (an int means a uniform grid).

    Entries are exact interval overlaps: each branch is monotone, so the
    preimage of a cell is an interval with endpoints given by the branch
    inverses of the cell edges.
    """
    if not isinstance(pm, PMMap):
        pm = PMMap(pm)
    grid = as_grid(grid_or_n)
    e = grid.edges
    y_left = np.array(left_preimage(pm, e), dtype=float)
    y_left[0], y_left[-1] = 0.0, 0.5
    y_left = np.maximum.accumulate(y_left)
    y_right = 0.5 * e + 0.5
    rows, cols, vals = [], [], []
    for pre in (y_left, y_right):
        r, c, v = _branch_entries(pre, e, grid.widths)
        rows += r
        cols += c
        vals += v
    n = grid.n_cells
    mat = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                        shape=(n, n))
    mat.sum_duplicates()
    return UlamOperator(grid, pm.alpha, mat)


def apply_density(op: UlamOperator, d: GridDensity) -> GridDensity:
    """Push a density forward: mass in cell j is sum_i P[i, j] * mass in cell i."""
    if op.grid != d.grid:
        raise DimensionError(f"operator grid {op.grid!r} vs density grid {d.grid!r}")
    if op.grid.is_uniform:
        return GridDensity(d.grid, op.matrix.T @ d.values)
    w = d.grid.widths
    return GridDensity(d.grid, (op.matrix.T @ (d.values * w)) / w)


def power_iterate(op: UlamOperator, tol: float = 1e-12, max_iter: int = 200_000,
                  start: GridDensity | None = None):
    """Fixed point of ``op`` by plain iteration from ``start`` (default uniform).

    Returns (density, residual, iterations), the residual being the L1 norm of
    the last update.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    d = GridDensity.uniform(op.grid) if start is None else start
    resid = float("inf")
    for it in range(1, max_iter + 1):
        nd = apply_density(op, d)
        resid = l1_distance(nd, d)
        d = nd
        if resid <= tol:
            return d.clamped().normalized(), resid, it
    raise ConvergenceError(
        f"power iteration for alpha={op.alpha} did not reach {tol:.1e} in {max_iter} steps "
        f"(residual {resid:.3e})", residual=resid, iterations=max_iter)


def srb_density(pm, grid_or_n, tol: float = 1e-12, max_iter: int = 200_000) -> GridDensity:
    """Ulam approximation of the invariant SRB density of T_alpha (unit mass)."""
    op = build_ulam(pm, grid_or_n)
    return power_iterate(op, tol, max_iter)[0]


def quantize_alpha(alpha: float) -> float:
    return round(alpha * _QUANTA_PER_UNIT) / _QUANTA_PER_UNIT


class OperatorCache:
    """Thread-safe LRU store of Ulam operators and SRB densities.

    Keys are (alpha rounded to ALPHA_QUANTUM, grid); objects are built at the
    rounded alpha, so a cache hit is always exactly what a miss would build.
    """

    def __init__(self, max_operators: int = 1024, max_densities: int = 4096,
                 srb_tol: float = 1e-12, srb_max_iter: int = 200_000):
        self._ops = OrderedDict()
        self._srb = OrderedDict()
        self._max_ops = max_operators
        self._max_srb = max_densities
        self.srb_tol = srb_tol
        self.srb_max_iter = srb_max_iter
        self._lock = threading.RLock()

    @staticmethod
    def _key(alpha, grid):
        return (int(round(alpha * _QUANTA_PER_UNIT)), grid.key)

    def _get(self, store, limit, key, build):
        with self._lock:
            if key in store:
                store.move_to_end(key)
                return store[key]
            obj = build()
            store[key] = obj
            if len(store) > limit:
                store.popitem(last=False)
            return obj

    def operator(self, alpha: float, grid_or_n) -> UlamOperator:
        grid = as_grid(grid_or_n)
        return self._get(self._ops, self._max_ops, self._key(alpha, grid),
                         lambda: build_ulam(PMMap(quantize_alpha(alpha)), grid))

    def srb(self, alpha: float, grid_or_n) -> GridDensity:
        grid = as_grid(grid_or_n)
        return self._get(
            self._srb, self._max_srb, self._key(alpha, grid),
            lambda: power_iterate(self.operator(alpha, grid), self.srb_tol,
                                  self.srb_max_iter)[0])

    def clear(self):
        with self._lock:
            self._ops.clear()
            self._srb.clear()


default_cache = OperatorCache()


def compose_apply(alphas: Sequence[float], grid_or_n, d: GridDensity,
                  cache: OperatorCache | None = None,
                  beta_star: float | None = None) -> GridDensity:
    """Apply L_{alpha_n} ... L_{alpha_1} to ``d`` with cached operators."""
    grid = as_grid(grid_or_n)
    if d.grid != grid:
        raise DimensionError(f"density grid {d.grid!r} vs requested {grid!r}")
    if beta_star is not None and len(alphas) and max(alphas) > beta_star:
        raise AdmissibilityError(f"alpha {max(alphas)} exceeds beta_star {beta_star}")
    cache = default_cache if cache is None else cache
    for a in alphas:
        d = apply_density(cache.operator(a, grid), d)
    return d


def density_to_csv(d: GridDensity, path, alpha: float | None = None):
    with open(path, "w") as fh:
        fh.write(f"# N={d.n_cells} alpha={alpha!r} grid={d.grid.key!r}\n")
        for v in d.values:
            fh.write(f"{v:.17g}\n")


def density_from_csv(path, grid_or_n=None) -> GridDensity:
    with open(path) as fh:
        header = fh.readline()
        values = np.array([float(line) for line in fh if line.strip()])
    if grid_or_n is None:
        grid = Grid.uniform(len(values))
    else:
        grid = as_grid(grid_or_n)
    if not header.startswith("#"):
        raise ValueError("missing density header")
    return GridDensity(grid, values)
