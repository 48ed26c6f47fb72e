"""Paired significance testing with multiple-comparison correction.

The two-sided paired t-test evaluates its p-value through the regularized
incomplete beta function (continued-fraction form, absolute accuracy well
below 1e-10), so no external statistics package is needed at runtime.
Holm's step-down correction is the default family-wise adjustment;
Bonferroni is available for comparison.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import StatsError

_BETA_EPS = 1e-15
_BETA_FPMIN = 1e-300
_BETA_MAX_ITER = 300


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _BETA_FPMIN:
        d = _BETA_FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _BETA_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETA_FPMIN:
            d = _BETA_FPMIN
        c = 1.0 + aa / c
        if abs(c) < _BETA_FPMIN:
            c = _BETA_FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETA_FPMIN:
            d = _BETA_FPMIN
        c = 1.0 + aa / c
        if abs(c) < _BETA_FPMIN:
            c = _BETA_FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETA_EPS:
            return h
    raise StatsError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf_two_sided(t: float, df: int) -> float:
    """Two-sided tail probability of Student's t with df degrees of freedom."""
    if df < 1:
        raise StatsError(f"degrees of freedom must be >= 1, got {df}")
    if math.isinf(t):
        return 0.0
    x = df / (df + t * t)
    return regularized_incomplete_beta(df / 2.0, 0.5, x)


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    df: int
    degenerate_variance: bool = False


def paired_t_test(a, b) -> TTestResult:
    """Two-sided paired t-test on matched samples.

    All-zero differences give (t=0, p=1).  Nonzero but constant differences
    have no variance to test against; they are flagged and reported p=0.
    """
    a = [float(v) for v in a]
    b = [float(v) for v in b]
    if len(a) != len(b):
        raise StatsError(f"sample length mismatch: {len(a)} vs {len(b)}")
    n = len(a)
    if n < 2:
        raise StatsError("need at least 2 paired observations")
    d = [x - y for x, y in zip(a, b)]
    mean = math.fsum(d) / n
    ss = math.fsum((v - mean) ** 2 for v in d)
    df = n - 1
    if ss == 0.0:
        if mean == 0.0:
            return TTestResult(t=0.0, p=1.0, df=df)
        return TTestResult(
            t=math.copysign(math.inf, mean), p=0.0, df=df,
            degenerate_variance=True,
        )
    sd = math.sqrt(ss / df)
    t = mean / (sd / math.sqrt(n))
    return TTestResult(t=t, p=t_sf_two_sided(t, df), df=df)


def _check_pvalues(p_values) -> list[float]:
    ps = [float(p) for p in p_values]
    for p in ps:
        if not (0.0 <= p <= 1.0):
            raise StatsError(f"p-value {p} outside [0, 1]")
    return ps


def holm_correction(p_values) -> list[float]:
    """Holm step-down adjusted p-values, returned in the input order."""
    ps = _check_pvalues(p_values)
    m = len(ps)
    order = sorted(range(m), key=lambda i: ps[i])
    adjusted = [0.0] * m
    running = 0.0
    for rank, idx in enumerate(order):
        running = max(running, (m - rank) * ps[idx])
        adjusted[idx] = min(running, 1.0)
    return adjusted


def bonferroni_correction(p_values) -> list[float]:
    """Plain Bonferroni adjustment."""
    ps = _check_pvalues(p_values)
    m = len(ps)
    return [min(m * p, 1.0) for p in ps]
