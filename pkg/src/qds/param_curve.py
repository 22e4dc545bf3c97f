"""Piecewise Hoelder driving curves and the triangular parameter arrays they generate."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import AdmissibilityError, DomainError

SEGMENT_KINDS = ("constant", "affine", "power_holder", "tabulated")


@dataclass(frozen=True)
class CurveSegment:
    """The curve restricted to one regularity interval [t_lo, t_hi).

    ``params`` by kind:

    - constant: (value,)
    - affine: (v_lo, v_hi), linear from t_lo to t_hi
    - power_holder: (a0, c, theta), a0 + c (t - t_lo)^theta
    - tabulated: (t_0, ..., t_p, v_0, ..., v_p), linear interpolation
    """

    t_lo: float
    t_hi: float
    kind: str
    params: tuple

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if self.kind not in SEGMENT_KINDS:
            raise ValueError(f"unknown segment kind {self.kind!r}")
        if not (0.0 <= self.t_lo < self.t_hi <= 1.0):
            raise ValueError(f"bad segment interval [{self.t_lo}, {self.t_hi}]")
        p = self.params
        expected = {"constant": 1, "affine": 2, "power_holder": 3}
        if self.kind in expected and len(p) != expected[self.kind]:
            raise ValueError(f"{self.kind} segment takes {expected[self.kind]} params")
        if self.kind == "power_holder" and not (0.0 < p[2] <= 1.0):
            raise ValueError("power_holder exponent must lie in (0, 1]")
        if self.kind == "tabulated":
            if len(p) < 4 or len(p) % 2:
                raise ValueError("tabulated segment needs matching t and v lists")
            ts = np.array(p[: len(p) // 2])
            if np.any(np.diff(ts) <= 0) or ts[0] > self.t_lo or ts[-1] < self.t_hi:
                raise ValueError("tabulated sample times must increase and cover the segment")
        lo, hi = self.value_range()
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"segment values [{lo}, {hi}] leave [0, 1]")

    @classmethod
    def constant(cls, t_lo, t_hi, value):
        return cls(t_lo, t_hi, "constant", (value,))

    @classmethod
    def affine(cls, t_lo, t_hi, v_lo, v_hi):
        return cls(t_lo, t_hi, "affine", (v_lo, v_hi))

    @classmethod
    def power_holder(cls, t_lo, t_hi, a0, c, theta):
        return cls(t_lo, t_hi, "power_holder", (a0, c, theta))

    @classmethod
    def tabulated(cls, t_lo, t_hi, ts, vs):
        if len(ts) != len(vs):
            raise ValueError("ts and vs differ in length")
        return cls(t_lo, t_hi, "tabulated", tuple(ts) + tuple(vs))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        p = self.params
        if self.kind == "constant":
            v = np.full_like(t, p[0])
        elif self.kind == "affine":
            s = (t - self.t_lo) / (self.t_hi - self.t_lo)
            v = p[0] + (p[1] - p[0]) * s
        elif self.kind == "power_holder":
            v = p[0] + p[1] * np.maximum(t - self.t_lo, 0.0) ** p[2]
        else:
            half = len(p) // 2
            v = np.interp(t, p[:half], p[half:])
        return v

    def value_range(self):
        p = self.params
        if self.kind == "constant":
            return p[0], p[0]
        if self.kind == "affine":
            return min(p), max(p)
        if self.kind == "power_holder":
            end = p[0] + p[1] * (self.t_hi - self.t_lo) ** p[2]
            return min(p[0], end), max(p[0], end)
        half = len(p) // 2
        ts = np.array(p[:half])
        vs = np.array(p[half:])
        inside = (ts > self.t_lo) & (ts < self.t_hi)
        vals = np.concatenate([vs[inside], np.interp([self.t_lo, self.t_hi], ts, vs)])
        return float(vals.min()), float(vals.max())


@dataclass(frozen=True)
class PiecewiseHolderCurve:
    """A driving curve gamma: [0, 1] -> [0, 1], Hoelder with exponent theta on each piece.

    Jumps are allowed at interior breakpoints, where the curve is
    right-continuous; at t = 1 the last segment is used.
    """

    segments: tuple
    theta: float
    beta_star: float
    breakpoints: tuple = field(init=False)

    def __post_init__(self):
        segs = tuple(self.segments)
        if not segs:
            raise ValueError("a curve needs at least one segment")
        if segs[0].t_lo != 0.0 or segs[-1].t_hi != 1.0:
            raise ValueError("segments must cover [0, 1]")
        for left, right in zip(segs, segs[1:]):
            if left.t_hi != right.t_lo:
                raise ValueError("segment endpoints must match")
        if not (0.0 < self.theta <= 1.0):
            raise ValueError("theta must lie in (0, 1]")
        if not (0.0 < self.beta_star < 1.0):
            raise ValueError("beta_star must lie in (0, 1)")
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "breakpoints", tuple(s.t_lo for s in segs) + (1.0,))

    @classmethod
    def constant(cls, value, beta_star, theta=1.0):
        return cls((CurveSegment.constant(0.0, 1.0, value),), theta, beta_star)

    @classmethod
    def affine(cls, v0, v1, beta_star, theta=1.0):
        return cls((CurveSegment.affine(0.0, 1.0, v0, v1),), theta, beta_star)

    def max_value(self):
        return max(s.value_range()[1] for s in self.segments)

    def segment_index(self, t):
        """Index of the segment holding ``t`` (right-continuous at breakpoints)."""
        inner = np.asarray(self.breakpoints[1:-1])
        return np.searchsorted(inner, np.asarray(t, dtype=float), side="right")

    def __call__(self, t):
        return sample_curve(self, t)


def sample_curve(curve: PiecewiseHolderCurve, t):
    """gamma_t.  Scalars in, scalars out."""
    arr = np.asarray(t, dtype=float)
    if np.any(~(arr >= 0.0) | ~(arr <= 1.0)):
        raise DomainError("t must lie in [0, 1]")
    idx = np.atleast_1d(curve.segment_index(arr))
    flat = np.atleast_1d(arr)
    out = np.empty_like(flat)
    for i, seg in enumerate(curve.segments):
        mask = idx == i
        if np.any(mask):
            out[mask] = seg(flat[mask])
    if np.ndim(t) == 0:
        return float(out[0])
    return out.reshape(arr.shape)


def build_row(curve: PiecewiseHolderCurve, n: int,
              perturbation: Mapping[int, Sequence[float]] | None = None) -> np.ndarray:
    """Row n of the equipartition array: alpha_{n,k} = gamma_{k/n}, k = 0..n.

    ``perturbation`` optionally maps a level n to n+1 additive offsets.

    Raises
    ------
    AdmissibilityError
        if an entry falls outside [0, beta_star].
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    row = sample_curve(curve, np.arange(n + 1) / n)
    if perturbation is not None and n in perturbation:
        offsets = np.asarray(perturbation[n], dtype=float)
        if offsets.shape != row.shape:
            raise ValueError(f"perturbation for n={n} must have {n + 1} entries")
        row = row + offsets
    if row.min() < 0.0 or row.max() > curve.beta_star:
        raise AdmissibilityError(
            f"row {n} leaves [0, beta_star={curve.beta_star}] (max {row.max():.6g})")
    return row


@dataclass
class AdmissibilityReport:
    max_value: float
    beta_star: float
    range_ok: bool
    holder_constants: list
    scaled_deviation: dict
    interior_scaled_deviation: dict
    bounded: bool

    @property
    def ok(self):
        return self.range_ok and self.bounded


def _holder_constant(seg, theta, n_pts=257):
    t = np.linspace(seg.t_lo, seg.t_hi, n_pts)
    # keep the open right end out of the jump
    t[-1] = np.nextafter(seg.t_hi, seg.t_lo)
    v = seg(t)
    dv = np.abs(v[:, None] - v[None, :])
    dt = np.abs(t[:, None] - t[None, :]) ** theta
    np.fill_diagonal(dt, 1.0)
    return float(np.max(dv / dt))


def verify_admissibility(curve: PiecewiseHolderCurve, n_list: Sequence[int],
                         tail_slack: float = 0.10) -> AdmissibilityReport:
    """Check the standing hypotheses on a curve empirically.

    For every n the statistic n^theta sup_t |alpha_{n, ceil(nt)} - gamma_t| is
    taken over 16n + 1 grid points plus the breakpoints.  Two versions are
    kept: the full sup, and the sup restricted to t whose lattice time
    ceil(nt)/n lies in the same regularity interval as t.  The sequence counts
    as bounded when each value is at most (1 + tail_slack) times its
    predecessor.  Range violations are reported, never raised.
    """
    if not n_list:
        raise ValueError("n_list must be nonempty")
    theta = curve.theta
    max_v = curve.max_value()
    holder = [_holder_constant(s, theta) for s in curve.segments]
    full, interior = {}, {}
    for n in sorted(set(int(n) for n in n_list)):
        t = np.union1d(np.linspace(0.0, 1.0, 16 * n + 1), curve.breakpoints)
        k = np.ceil(n * t - 1e-12)
        lattice = k / n
        dev = np.abs(sample_curve(curve, lattice) - sample_curve(curve, t))
        same = curve.segment_index(lattice) == curve.segment_index(t)
        full[n] = float(n**theta * dev.max())
        interior[n] = float(n**theta * dev[same].max(initial=0.0))
    vals = [full[n] for n in sorted(full)]
    bounded = all(b <= (1.0 + tail_slack) * a + 1e-15 for a, b in zip(vals, vals[1:]))
    return AdmissibilityReport(
        max_value=max_v,
        beta_star=curve.beta_star,
        range_ok=max_v <= curve.beta_star,
        holder_constants=holder,
        scaled_deviation=full,
        interior_scaled_deviation=interior,
        bounded=bounded,
    )


def curve_from_dict(data: Mapping, beta_star: float) -> PiecewiseHolderCurve:
    """Build a curve from its config mapping (``theta`` plus ``segments``)."""
    segs = []
    for raw in data["segments"]:
        raw = dict(raw)
        kind = raw.pop("kind")
        t_lo = float(raw.pop("t_lo", 0.0))
        t_hi = float(raw.pop("t_hi", 1.0))
        if kind == "constant":
            seg = CurveSegment.constant(t_lo, t_hi, raw.pop("value"))
        elif kind == "affine":
            seg = CurveSegment.affine(t_lo, t_hi, raw.pop("start"), raw.pop("end"))
        elif kind == "power_holder":
            seg = CurveSegment.power_holder(t_lo, t_hi, raw.pop("a0"), raw.pop("c"),
                                            raw.pop("exponent"))
        elif kind == "tabulated":
            seg = CurveSegment.tabulated(t_lo, t_hi, raw.pop("times"), raw.pop("values"))
        else:
            raise ValueError(f"unknown segment kind {kind!r}")
        if raw:
            raise ValueError(f"unknown keys for {kind} segment: {sorted(raw)}")
        segs.append(seg)
    return PiecewiseHolderCurve(tuple(segs), float(data.get("theta", 1.0)), beta_star)

