"""Decay envelopes and continuity shapes used to falsify the asymptotic bounds."""

from __future__ import annotations

import math

import numpy as np


def rho(n, beta_star):
    """Memory-loss envelope n^{-(1/b - 1)} (log n)^{1/b} for n >= 2; rho(0) = rho(1) = 1."""
    n = np.asarray(n, dtype=float)
    p = 1.0 / beta_star
    with np.errstate(divide="ignore", invalid="ignore"):
        val = n ** -(p - 1.0) * np.log(n) ** p
    out = np.where(n >= 2, val, 1.0)
    return float(out) if out.ndim == 0 else out


def phi_summable(s):
    """s^{-1} (log s)^{-2} for s >= 2, frozen at its s = 2 value below."""
    s = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = 1.0 / (s * np.log(s) ** 2)
    out = np.where(s >= 2, val, 0.5 / math.log(2.0) ** 2)
    return float(out) if out.ndim == 0 else out


def operator_shape(gap, beta_star):
    """(gap)^{(1 - b)/3} |log gap| -- parameter continuity of L_alpha h."""
    gap = np.asarray(gap, dtype=float)
    return gap ** ((1.0 - beta_star) / 3.0) * np.abs(np.log(gap))


def srb_shape(gap, beta_star):
    """(gap)^{(1 - b)^2/3} |log gap|^{1/b} -- parameter continuity of the SRB density."""
    gap = np.asarray(gap, dtype=float)
    return gap ** ((1.0 - beta_star) ** 2 / 3.0) * np.abs(np.log(gap)) ** (1.0 / beta_star)


def loglog_slope(x, y):
    """Least-squares slope of log y against log x (nonpositive y are dropped)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = y > 0
    if keep.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)[0])
