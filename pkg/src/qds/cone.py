"""The invariant cone C_*(beta) and explicit C^1-to-cone decompositions.

A density f on (0, 1] is in the cone when f >= 0, f is decreasing,
x^{beta+1} f is increasing and f(x) <= a(beta) x^{-beta} m(f), with
a(beta) = 2^beta (beta + 2).  On a grid these conditions are checked on cell
averages, skipping the first cell where x^{-beta} is singular.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionError
from .observables import ObservableSpec
from .transfer_op import GridDensity, OperatorCache, as_grid, compose_apply

MAX_DEPTH = 4


@dataclass(frozen=True)
class ConeParams:
    beta: float
    a: float = field(init=False)

    def __post_init__(self):
        if not (0.0 < self.beta < 1.0):
            raise ValueError(f"beta must lie in (0, 1), got {self.beta!r}")
        object.__setattr__(self, "a", cone_constant(self.beta))

    @property
    def split_factor(self):
        """max(a/(beta+1), 4a/(a-1)), the factor shared by delta and C_1."""
        a = self.a
        return max(a / (self.beta + 1.0), 4.0 * a / (a - 1.0))

    @property
    def c1(self):
        return 8.0 + 2.0 * self.split_factor


def cone_constant(beta: float) -> float:
    """a(beta) = 2^beta (beta + 2)."""
    return 2.0**beta * (beta + 2.0)


@dataclass(frozen=True)
class ConeReport:
    """Minimum slack of each cone condition over the checked cells.

    ``nonnegativity`` is min f; ``decreasing`` is min (f_i - f_{i+1}) / scale;
    ``weighted_increasing`` is min of the increments of x^{beta+1} f over
    scale; ``upper_bound`` is min (bound_i - f_i) / bound_i with
    bound_i = a x_i^{-beta} m(f).
    """

    passes: bool
    nonnegativity: float
    decreasing: float
    weighted_increasing: float
    upper_bound: float
    eps_cone: float

    @property
    def margins(self):
        return (self.nonnegativity, self.decreasing, self.weighted_increasing, self.upper_bound)


def cone_membership(d: GridDensity, params: ConeParams, eps_cone: float) -> ConeReport:
    """Check the four cone conditions on cells 2..N using cell left edges."""
    if d.n_cells < 4:
        raise DimensionError("cone checks need at least 4 cells")
    v = d.values[1:]
    x = d.grid.left[1:]
    scale = max(1.0, float(np.max(np.abs(v))))
    b = params.beta
    nonneg = float(v.min())
    dec = float(np.min(v[:-1] - v[1:])) / scale
    weighted = x ** (b + 1.0) * v
    inc = float(np.min(np.diff(weighted))) / scale
    m = d.mass
    if m > 0:
        bound = params.a * x ** (-b) * m
        upper = float(np.min((bound - v) / bound))
    else:
        upper = -float(v.max()) / scale
    margins = (nonneg, dec, inc, upper)
    return ConeReport(all(mg >= -eps_cone for mg in margins), *margins, eps_cone=eps_cone)


def srb_bound_margin(d: GridDensity, alpha: float, eps_grid: float = 0.05) -> float:
    """min over cells 2..N of (1 + eps_grid) a(alpha) x_i^{-alpha} - d_i; >= 0 means pass."""
    x = d.grid.left[1:]
    bound = cone_constant(alpha) * x ** (-alpha) * d.mass * (1.0 + eps_grid)
    return float(np.min(bound - d.values[1:]))


def random_cone_density(rng: np.random.Generator, grid_or_n, beta: float,
                        n_terms: int = 3) -> GridDensity:
    """Unit-mass cell averages of a random positive mix of cone functions.

    Terms are constants, x^{-b} and min(x^{-b}, K) with 0 <= b <= beta; each
    lies in C_*(beta) and the cone is convex.
    """
    grid = as_grid(grid_or_n)
    e = grid.edges
    w = grid.widths
    total = np.zeros(grid.n_cells)
    for _ in range(n_terms):
        kind = rng.integers(3)
        c = rng.uniform(0.1, 1.0)
        if kind == 0:
            total += c
            continue
        bexp = rng.uniform(0.0, beta)
        prim = e ** (1.0 - bexp) / (1.0 - bexp)
        if kind == 1:
            total += c * np.diff(prim) / w
        else:
            # min(x^{-b}, K) = K on [0, x_K], x^{-b} beyond, x_K = K^{-1/b}
            k_cap = rng.uniform(1.5, 50.0)
            x_k = k_cap ** (-1.0 / bexp) if bexp > 0 else 1.0
            cap_prim = np.where(e <= x_k, k_cap * e, k_cap * x_k + prim - x_k ** (1.0 - bexp) / (1.0 - bexp))
            total += c * np.diff(cap_prim) / w
    return GridDensity(grid, total).normalized()


@dataclass(frozen=True)
class DecompositionConstants:
    lam: float
    nu: float
    delta: float
    A: float
    B: float
    c1: float


def c1_decompose(f: ObservableSpec, A: float, B: float, params: ConeParams
                 ) -> DecompositionConstants:
    """Constants making (f + lam x + nu) h + delta and (lam x + nu) h + delta cone functions.

    Valid for every h in the cone with m(h) <= B whenever A >= ||f||_{C^1}.
    """
    if B < 0:
        raise ValueError("B must be nonnegative")
    if A < f.c1_norm:
        raise ValueError(f"A = {A} is below the C^1 norm {f.c1_norm} of f")
    return DecompositionConstants(
        lam=-A, nu=6.0 * A, delta=2.0 * A * B * params.split_factor, A=A, B=B, c1=params.c1)


def split_product(f: ObservableSpec, h: GridDensity, consts: DecompositionConstants):
    """The two cone pieces (f + lam x + nu) h + delta and (lam x + nu) h + delta."""
    x = h.grid.midpoints
    base = (consts.lam * x + consts.nu) * h.values
    plus = f(x) * h.values + base + consts.delta
    minus = base + consts.delta
    return GridDensity(h.grid, plus), GridDensity(h.grid, minus)


@dataclass(frozen=True)
class Decomposition:
    pieces: tuple
    signs: tuple
    budget: float

    def signed_sum(self):
        out = np.zeros(self.pieces[0].n_cells)
        for s, g in zip(self.signs, self.pieces):
            out += s * g.values
        return GridDensity(self.pieces[0].grid, out)


def nested_product(fs: Sequence[ObservableSpec], h: GridDensity,
                   gaps: Sequence[Sequence[float]], cache: OperatorCache | None = None
                   ) -> GridDensity:
    """f_k L~_{gap_{k-1}} ... f_2 L~_{gap_1} (f_1 h) directly on the grid."""
    x = h.grid.midpoints
    g = GridDensity(h.grid, fs[0](x) * h.values)
    for fi, gap in zip(fs[1:], gaps):
        g = compose_apply(gap, h.grid, g, cache)
        g = GridDensity(h.grid, fi(x) * g.values)
    return g


def recursive_decompose(fs: Sequence[ObservableSpec], h: GridDensity,
                        gaps: Sequence[Sequence[float]], params: ConeParams,
                        bounds: Sequence[float] | None = None,
                        cache: OperatorCache | None = None) -> Decomposition:
    """Split the nested product into 2^k signed cone pieces.

    At step i every current piece is pushed through the operator block
    gaps[i-2] (cone and mass preserved) and split by c1_decompose with
    A_i = bounds[i-1] (default ||f_i||_{C^1}) and the mass bound
    B_i = C_1^{i-1} A_1 ... A_{i-1} m(h).  Each final piece has mass at
    most C_1^k A_1 ... A_k m(h).
    """
    k = len(fs)
    if k < 1:
        raise ValueError("need at least one observable")
    if k > MAX_DEPTH:
        raise ValueError(f"decomposition depth {k} exceeds the cap {MAX_DEPTH}")
    if len(gaps) != k - 1:
        raise ValueError(f"{k} observables need {k - 1} gaps, got {len(gaps)}")
    amps = [f.c1_norm for f in fs] if bounds is None else [float(b) for b in bounds]
    if len(amps) != k:
        raise ValueError("one bound per observable is required")
    c1 = params.c1
    mass_bound = h.mass
    pieces, signs = [h], [1.0]
    for i, f in enumerate(fs):
        if i > 0:
            pieces = [compose_apply(gaps[i - 1], h.grid, g, cache) for g in pieces]
        consts = c1_decompose(f, amps[i], mass_bound, params)
        new_pieces, new_signs = [], []
        for s, g in zip(signs, pieces):
            plus, minus = split_product(f, g, consts)
            new_pieces += [plus, minus]
            new_signs += [s, -s]
        pieces, signs = new_pieces, new_signs
        mass_bound *= c1 * amps[i]
    return Decomposition(tuple(pieces), tuple(signs), mass_bound)
