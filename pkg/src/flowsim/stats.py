"""Monte Carlo estimates, the two-sample KS gate and tolerance checks."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["McEstimate", "mc_estimate", "KsResult", "ks_two_sample", "ToleranceResult", "tolerance_check"]


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    n: int


def mc_estimate(samples) -> McEstimate:
    """Sample mean with stderr = sd / sqrt(n); needs at least two samples."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise ValueError("need at least two samples for a standard error")
    return McEstimate(float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size)), int(x.size))


@dataclass(frozen=True)
class KsResult:
    statistic: float
    critical: float
    alpha: float
    passed: bool


def ks_critical(n, m, alpha):
    c = math.sqrt(-0.5 * math.log(alpha / 2.0))
    return c * math.sqrt((n + m) / (n * m))


def ks_two_sample(a, b, alpha=0.01) -> KsResult:
    """Largest empirical-CDF gap against the asymptotic critical value.

    Symmetric in its arguments; passes iff the statistic does not exceed
    the critical value.
    """
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be nonempty")
    pooled = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, pooled, side="right") / a.size
    cdf_b = np.searchsorted(b, pooled, side="right") / b.size
    d = float(np.max(np.abs(cdf_a - cdf_b)))
    crit = ks_critical(a.size, b.size, alpha)
    return KsResult(d, crit, alpha, d <= crit)


@dataclass(frozen=True)
class ToleranceResult:
    value: float
    target: float
    stderr: float
    tolerance: float
    passed: bool


def tolerance_check(estimate: McEstimate, target, k_sigma=3.0, extra=0.0) -> ToleranceResult:
    """Pass iff |mean - target| <= k_sigma * stderr + extra."""
    tol = k_sigma * estimate.stderr + extra
    return ToleranceResult(
        estimate.mean, float(target), estimate.stderr, tol, bool(abs(estimate.mean - target) <= tol)
    )
