"""Sample statistics for Gaussianity checks.

Moment summaries with seeded-bootstrap standard errors, an asymptotic
Kolmogorov-Smirnov test against a fixed Gaussian, and the fourth-moment
ratio E[X^4] / (3 Var[X]^2) that equals 1 for a centered Gaussian.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import kolmogorov, ndtr

_BOOT_SALT = 0x5D8F_21C3


@dataclass(frozen=True)
class MomentSummary:
    n: int
    mean: float
    variance: float          # unbiased
    skewness: float
    excess_kurtosis: float
    se_mean: float
    se_variance: float
    se_skewness: float
    se_kurtosis: float
    defined: bool            # False when the sample is constant
    reference: tuple | None = None     # optional (mu0, sigma0_sq)
    standardized_mean: float = np.nan  # (mean - mu0) / (sigma0 / sqrt(n))


def _raw_moments(x: np.ndarray):
    m = x.mean()
    c = x - m
    v = np.mean(c * c)
    if v == 0.0:
        return m, 0.0, np.nan, np.nan
    skew = np.mean(c ** 3) / v ** 1.5
    kurt = np.mean(c ** 4) / v ** 2 - 3.0
    return m, v, skew, kurt


def moment_summary(samples, n_boot: int = 1000, seed: int = 0,
                   reference: tuple | None = None) -> MomentSummary:
    """Mean/variance/skewness/excess-kurtosis with bootstrap SEs.

    The bootstrap resampling is seeded, so summaries are reproducible.
    A constant sample yields defined=False with NaN shape statistics.
    With a reference (mu0, sigma0_sq), the standardized mean
    (mean - mu0) / (sigma0 / sqrt(n)) is reported as well.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    n = x.size
    if n < 8:
        raise ValueError(f"need at least 8 samples, got {n}")
    mean, v_biased, skew, kurt = _raw_moments(x)
    variance = v_biased * n / (n - 1)
    std_mean = np.nan
    if reference is not None:
        mu0, sig0_sq = reference
        if sig0_sq <= 0:
            raise ValueError("reference variance must be positive")
        std_mean = float((mean - mu0) / np.sqrt(sig0_sq / n))
    if v_biased == 0.0:
        return MomentSummary(n, float(mean), 0.0, np.nan, np.nan,
                             0.0, 0.0, np.nan, np.nan, defined=False,
                             reference=reference, standardized_mean=std_mean)

    rng = np.random.default_rng(np.uint64(seed) ^ np.uint64(_BOOT_SALT))
    stats = np.empty((n_boot, 4))
    for b in range(n_boot):
        xb = x[rng.integers(0, n, size=n)]
        mb, vb, sb, kb = _raw_moments(xb)
        stats[b] = (mb, vb * n / (n - 1), sb, kb)
    se = np.nanstd(stats, axis=0, ddof=1)
    return MomentSummary(n, float(mean), float(variance), float(skew),
                         float(kurt), float(se[0]), float(se[1]),
                         float(se[2]), float(se[3]), defined=True,
                         reference=reference, standardized_mean=std_mean)


@dataclass(frozen=True)
class KSResult:
    statistic: float
    p_value: float
    n: int


def ks_normality(samples, mean: float, variance: float) -> KSResult:
    """Kolmogorov-Smirnov test of the sample against N(mean, variance),
    with the asymptotic Kolmogorov distribution for the p-value.

    The statistic is computed on the standardized sample; it is invariant
    under a joint affine map of samples and reference parameters.
    """
    x = np.sort(np.asarray(samples, dtype=np.float64).ravel())
    n = x.size
    if n < 2:
        raise ValueError("need at least 2 samples")
    if variance <= 0:
        raise ValueError("reference variance must be positive")
    u = ndtr((x - mean) / np.sqrt(variance))
    i = np.arange(1, n + 1)
    d_plus = np.max(i / n - u)
    d_minus = np.max(u - (i - 1) / n)
    stat = float(max(d_plus, d_minus))
    p = float(kolmogorov(stat * np.sqrt(n)))
    return KSResult(stat, p, n)


@dataclass(frozen=True)
class RatioResult:
    ratio: float
    ci_low: float
    ci_high: float
    n: int


def fourth_moment_ratio(samples, n_boot: int = 1000, seed: int = 0,
                        level: float = 0.95) -> RatioResult:
    """E[X^4] / (3 Var[X]^2) with a seeded-bootstrap percentile CI.

    Equals 1 for a Gaussian sample and 1/3 for a symmetric two-point
    (sign) sample.  The variance is the plain (biased) one, so the sign
    example gives exactly 1/3 at any sample size.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    n = x.size
    if n < 100:
        raise ValueError(f"need at least 100 samples, got {n}")
    v = float(np.var(x))
    if v == 0.0:
        raise ValueError("fourth-moment ratio undefined for a constant sample")
    ratio = float(np.mean(x ** 4) / (3.0 * v * v))
    rng = np.random.default_rng(np.uint64(seed) ^ np.uint64(_BOOT_SALT))
    boots = np.empty(n_boot)
    for b in range(n_boot):
        xb = x[rng.integers(0, n, size=n)]
        vb = np.var(xb)
        boots[b] = np.mean(xb ** 4) / (3.0 * vb * vb) if vb > 0 else np.nan
    lo, hi = np.nanpercentile(boots, [50 * (1 - level), 50 * (1 + level)])
    return RatioResult(ratio, float(lo), float(hi), n)
