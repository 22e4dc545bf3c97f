"""Pomeau-Manneville maps, their left-branch inverse, and orbit iteration.

The family is

    T_a(x) = x (1 + 2^a x^a)   for 0 <= x < 1/2
    T_a(x) = 2x - 1            for 1/2 <= x <= 1

with a neutral fixed point at 0 whenever a > 0.  All public functions
accept scalars or numpy arrays and return the same kind.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import AdmissibilityError, ConvergenceError, DomainError

PREIMAGE_ITERATIONS = 64
PREIMAGE_TOL = 1e-13

# width of the bit discarded by the right branch 2x - 1 for x in [1/2, 1)
_RIGHT_BRANCH_LOST_BITS = 2.0**-52


def _as_unit_interval(x, name="x"):
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr >= 0.0) | ~(arr <= 1.0)):
        raise DomainError(f"{name} must lie in [0, 1]")
    return arr


def _check_alpha(alpha):
    if not (0.0 <= alpha <= 1.0):
        raise DomainError(f"alpha must lie in [0, 1], got {alpha!r}")


def _out(arr, like):
    return float(arr) if np.ndim(like) == 0 else arr


@dataclass(frozen=True)
class PMMap:
    """One member T_alpha of the Pomeau-Manneville family."""

    alpha: float

    def __post_init__(self):
        object.__setattr__(self, "alpha", float(self.alpha))
        _check_alpha(self.alpha)

    def __call__(self, x):
        return evaluate(self, x)

    def derivative(self, x):
        return derivative(self, x)

    def left_preimage(self, x, tol=PREIMAGE_TOL):
        return left_preimage(self, x, tol)


@dataclass(frozen=True)
class MapSequence:
    """An admissible sequence (T_{alpha_i}) with every alpha_i <= beta_star."""

    alphas: tuple
    beta_star: float
    maps: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        alphas = tuple(float(a) for a in self.alphas)
        if not (0.0 < self.beta_star < 1.0):
            raise DomainError("beta_star must lie in (0, 1)")
        for i, a in enumerate(alphas):
            _check_alpha(a)
            if a > self.beta_star:
                raise AdmissibilityError(
                    f"alphas[{i}] = {a} exceeds beta_star = {self.beta_star}")
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "maps", tuple(PMMap(a) for a in alphas))

    def __len__(self):
        return len(self.alphas)


def _left_branch(alpha, x):
    return x * (1.0 + 2.0**alpha * x**alpha)


def evaluate(pm: PMMap, x):
    """Apply T_alpha to ``x``.

    The point x = 1/2 belongs to the right branch.  Results are clipped to
    [0, 1]; the clip only ever absorbs rounding of order one ulp.
    """
    arr = _as_unit_interval(x)
    a = pm.alpha
    if a == 0.0:
        y = np.where(arr < 0.5, 2.0 * arr, 2.0 * arr - 1.0)
    else:
        y = np.where(arr < 0.5, _left_branch(a, arr), 2.0 * arr - 1.0)
    return _out(np.clip(y, 0.0, 1.0), x)


def derivative(pm: PMMap, x):
    """T_alpha'(x): 1 + 2^a (1 + a) x^a on [0, 1/2) and 2 on [1/2, 1]."""
    arr = _as_unit_interval(x)
    a = pm.alpha
    left = 1.0 + 2.0**a * (1.0 + a) * arr**a
    return _out(np.where(arr < 0.5, left, 2.0), x)


_BELOW_HALF = np.nextafter(0.5, 0.0)


def _bisect_left_branch(a, arr, tol):
    """Vectorized bisection for y(1 + 2^a y^a) = x; ``a`` may be an array paired with x."""
    lo = 0.5 * arr
    # stay strictly inside [0, 1/2) unless x = 1, whose preimage is the endpoint 1/2
    hi = np.minimum(arr, np.where(arr < 1.0, _BELOW_HALF, 0.5))
    c = 2.0**a
    for _ in range(PREIMAGE_ITERATIONS):
        mid = 0.5 * (lo + hi)
        below = mid * (1.0 + c * mid**a) < arr
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    y = 0.5 * (lo + hi)
    # a = 0 is the doubling map, whose inverse x/2 is exact
    y = np.where(a == 0.0, 0.5 * arr, y)
    resid = np.max(np.abs(_left_branch(a, y) - arr), initial=0.0)
    if resid > tol:
        raise ConvergenceError(
            f"left preimage residual {resid:.3e} exceeds tol {tol:.3e}",
            residual=float(resid), iterations=PREIMAGE_ITERATIONS)
    return y


def left_preimage(pm: PMMap, x, tol=PREIMAGE_TOL):
    """Preimage of ``x`` under the left branch T_alpha|[0, 1/2).

    Bisection with a fixed budget of 64 halvings.  Since y <= T(y) <= 2y on
    the left branch, the root is bracketed by [x/2, min(x, 1/2)], which keeps
    the relative accuracy at machine level even for x close to 0.

    Raises
    ------
    ConvergenceError
        if the residual |T(y) - x| exceeds ``tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    arr = _as_unit_interval(x)
    if pm.alpha == 0.0:
        return _out(0.5 * arr, x)
    return _out(_bisect_left_branch(pm.alpha, arr, tol), x)


def evaluate_batch(alphas, x):
    """T_{alphas[i]}(x[i]) for paired arrays."""
    a = np.asarray(alphas, dtype=float)
    arr = _as_unit_interval(x)
    if np.any(~(a >= 0.0) | ~(a <= 1.0)):
        raise DomainError("alphas must lie in [0, 1]")
    y = np.where(arr < 0.5, _left_branch(a, arr), 2.0 * arr - 1.0)
    return np.clip(y, 0.0, 1.0)


def left_preimage_batch(alphas, x, tol=PREIMAGE_TOL):
    """Left-branch preimages of x[i] under T_{alphas[i]} for paired arrays."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    a = np.asarray(alphas, dtype=float)
    if np.any(~(a >= 0.0) | ~(a <= 1.0)):
        raise DomainError("alphas must lie in [0, 1]")
    return _bisect_left_branch(a, _as_unit_interval(x), tol)


def iterate_sequence(seq: MapSequence, x: float, k: int) -> list[float]:
    """Trajectory [x_0, ..., x_k] of ``x`` under T_{alpha_1}, ..., T_{alpha_k}."""
    if k < 0 or k > len(seq):
        raise IndexError(f"k = {k} outside 0..{len(seq)}")
    x = float(_as_unit_interval(x))
    traj = [x]
    for pm in seq.maps[:k]:
        x = evaluate(pm, x)
        traj.append(x)
    return traj


def walk(alphas: Sequence[float], x0, refill: Callable[[int], np.ndarray] | None = None
         ) -> Iterator[np.ndarray]:
    """Yield the batch state after each of the steps alpha_1, ..., alpha_n.

    ``x0`` is an array of initial points; the batch is advanced in lockstep.

    Floating-point orbits of the right branch 2x - 1 shed one leading bit per
    step, so runs of the exactly linear map (alpha = 0) collapse to 0 after
    about 53 steps.  When ``refill(step)`` is supplied it must return one
    uniform variate per orbit; it is used to redraw the discarded trailing bit,
    which is exactly the conditional law of that bit under an absolutely
    continuous initial distribution.
    """
    x = np.array(x0, dtype=float)
    for step, a in enumerate(alphas, start=1):
        right = x >= 0.5
        if a == 0.0:
            left_val = 2.0 * x
        else:
            left_val = _left_branch(a, x)
        right_val = 2.0 * x - 1.0
        if refill is not None:
            right_val = right_val + (refill(step) - 0.5) * _RIGHT_BRANCH_LOST_BITS
        x = np.clip(np.where(right, right_val, left_val), 0.0, 1.0)
        yield x
