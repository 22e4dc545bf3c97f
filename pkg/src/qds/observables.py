"""C^1 observables with recorded sup and C^1 norms.

The C^1 norm is ||f||_inf + ||f'||_inf throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from numpy.polynomial import Polynomial
from scipy.optimize import minimize_scalar

KINDS = ("polynomial", "trigonometric", "affine", "indicator_smooth")


def _smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def _smoothstep_prime(u):
    inside = (u > 0.0) & (u < 1.0)
    return np.where(inside, 6.0 * u * (1.0 - u), 0.0)


def _abs_max(fn, candidates, n_grid=1 << 14):
    """max |fn| on [0, 1]: dense grid, the given candidate points, then a local polish."""
    grid = np.linspace(0.0, 1.0, n_grid + 1)
    pts = np.concatenate([grid, np.asarray(candidates, dtype=float)])
    vals = np.abs(fn(pts))
    best = float(vals.max())
    i = int(np.argmax(vals[: n_grid + 1]))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, n_grid)]
    if hi > lo:
        res = minimize_scalar(lambda x: -abs(float(fn(np.array([x]))[0])),
                              bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-14})
        best = max(best, -float(res.fun))
    return best


@dataclass(frozen=True)
class ObservableSpec:
    """An observable f on [0, 1] with evaluable value and derivative.

    Coefficient layout by kind:

    - polynomial: c_0, ..., c_d in the monomial basis
    - affine: c_0, c_1 (f = c_0 + c_1 x)
    - trigonometric: c_0, a_1, b_1, a_2, b_2, ... with
      f = c_0 + sum_k a_k cos(k pi x) + b_k sin(k pi x)
    - indicator_smooth: lo, hi, width -- a C^1 smoothstep bump that equals 1 on
      [lo + width, hi - width] and 0 outside [lo, hi]
    """

    kind: str
    coefficients: tuple
    sup_norm: float = field(default=None)
    c1_norm: float = field(default=None)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown observable kind {self.kind!r}")
        coeffs = tuple(float(c) for c in self.coefficients)
        object.__setattr__(self, "coefficients", coeffs)
        if not coeffs:
            raise ValueError("an observable needs coefficients")
        if self.kind == "affine" and len(coeffs) != 2:
            raise ValueError("affine observables take exactly two coefficients")
        if self.kind == "trigonometric" and len(coeffs) % 2 == 0:
            raise ValueError("trigonometric coefficients are c0 followed by (a_k, b_k) pairs")
        if self.kind == "indicator_smooth":
            if len(coeffs) != 3:
                raise ValueError("indicator_smooth takes lo, hi, width")
            lo, hi, w = coeffs
            if not (w > 0 and hi - lo >= 2 * w):
                raise ValueError("indicator_smooth needs width > 0 and hi - lo >= 2 width")
        sup, c1 = self._norms()
        if self.sup_norm is None:
            object.__setattr__(self, "sup_norm", sup)
        elif self.sup_norm < sup:
            raise ValueError(f"recorded sup norm {self.sup_norm} below true value {sup}")
        if self.c1_norm is None:
            object.__setattr__(self, "c1_norm", c1)
        elif self.c1_norm < c1:
            raise ValueError(f"recorded C^1 norm {self.c1_norm} below true value {c1}")

    @classmethod
    def constant(cls, c):
        return cls("affine", (c, 0.0))

    @classmethod
    def from_dict(cls, data: Mapping):
        data = dict(data)
        kind = data.pop("kind")
        coeffs = data.pop("coefficients")
        sup = data.pop("sup_norm", None)
        c1 = data.pop("c1_norm", None)
        if data:
            raise ValueError(f"unknown observable keys: {sorted(data)}")
        return cls(kind, tuple(coeffs), sup, c1)

    @property
    def is_constant(self):
        c = self.coefficients
        if self.kind in ("affine", "polynomial", "trigonometric"):
            return all(v == 0.0 for v in c[1:])
        return False

    @property
    def constant_value(self):
        return self.coefficients[0] if self.is_constant else None

    def __call__(self, x):
        return self.value(x)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        c = self.coefficients
        if self.kind == "affine":
            return c[0] + c[1] * x
        if self.kind == "polynomial":
            return Polynomial(c)(x)
        if self.kind == "trigonometric":
            out = np.full_like(x, c[0])
            for k in range(1, (len(c) - 1) // 2 + 1):
                a, b = c[2 * k - 1], c[2 * k]
                out = out + a * np.cos(k * np.pi * x) + b * np.sin(k * np.pi * x)
            return out
        lo, hi, w = c
        return _smoothstep((x - lo) / w) * _smoothstep((hi - x) / w)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        c = self.coefficients
        if self.kind == "affine":
            return np.full_like(x, c[1])
        if self.kind == "polynomial":
            return Polynomial(c).deriv()(x)
        if self.kind == "trigonometric":
            out = np.zeros_like(x)
            for k in range(1, (len(c) - 1) // 2 + 1):
                a, b = c[2 * k - 1], c[2 * k]
                out = out + k * np.pi * (-a * np.sin(k * np.pi * x) + b * np.cos(k * np.pi * x))
            return out
        lo, hi, w = c
        u, v = (x - lo) / w, (hi - x) / w
        return (_smoothstep_prime(u) * _smoothstep(v) - _smoothstep(u) * _smoothstep_prime(v)) / w

    def _norms(self):
        c = self.coefficients
        if self.kind == "affine":
            return max(abs(c[0]), abs(c[0] + c[1])), max(abs(c[0]), abs(c[0] + c[1])) + abs(c[1])
        if self.kind == "indicator_smooth":
            lo, hi, w = c
            return 1.0, 1.0 + 1.5 / w
        if self.kind == "polynomial":
            p = Polynomial(c)
            crit_f = [r.real for r in p.deriv().roots() if abs(r.imag) < 1e-12] if len(c) > 2 else []
            crit_d = [r.real for r in p.deriv(2).roots() if abs(r.imag) < 1e-12] if len(c) > 3 else []
            pts_f = np.clip(np.array([0.0, 1.0] + crit_f), 0.0, 1.0)
            pts_d = np.clip(np.array([0.0, 1.0] + crit_d), 0.0, 1.0)
            sup = float(np.abs(p(pts_f)).max())
            dsup = float(np.abs(p.deriv()(pts_d)).max()) if len(c) > 1 else 0.0
            return sup, sup + dsup
        ks = np.arange(1, (len(c) - 1) // 2 + 1)
        cand = np.concatenate([[0.0, 0.5, 1.0], 1.0 / np.maximum(ks, 1), 0.5 / np.maximum(ks, 1)])
        sup = _abs_max(self.value, cand)
        dsup = _abs_max(self.derivative, cand) if len(c) > 1 else 0.0
        return sup, sup + dsup
