"""Jarque-Bera and one-sample Kolmogorov-Smirnov statistics."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np
from scipy.stats import chi2

from .errors import DegenerateSampleError, InputError

KS_TERMS = 100


def jb_from_moments(n: int, skewness: float, kurtosis: float, regressors: int = 1) -> tuple[float, float]:
    """Jarque-Bera statistic from sample moments; ``kurtosis`` is not excess."""
    stat = (n + regressors - 1) / 6 * (skewness**2 + (kurtosis - 3) ** 2 / 4)
    return float(stat), float(chi2.sf(stat, 2))


def jb_statistic(samples) -> tuple[float, float]:
    """Jarque-Bera normality statistic and its chi-squared(2) p-value."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 8:
        raise InputError(f"Jarque-Bera needs at least 8 samples, got {x.size}")
    dev = x - x.mean()
    m2 = np.mean(dev**2)
    if m2 == 0:
        raise DegenerateSampleError("Jarque-Bera undefined for zero sample variance")
    skew = np.mean(dev**3) / m2**1.5
    kurt = np.mean(dev**4) / m2**2
    return jb_from_moments(x.size, skew, kurt)


def kolmogorov_sf(t: float, terms: int = KS_TERMS) -> float:
    """Upper tail of the Kolmogorov distribution, ``P(K > t)``."""
    if t <= 0:
        return 1.0
    # the alternating series is useless below ~0.2 where P(K > t) = 1 to double precision
    if t < 0.2:
        return 1.0
    k = np.arange(1, terms + 1)
    total = 2 * np.sum((-1.0) ** (k - 1) * np.exp(-2 * k**2 * t * t))
    return float(min(1.0, max(0.0, total)))


def ks_statistic(samples, cdf: Callable[[np.ndarray], np.ndarray]) -> tuple[float, float]:
    """Sup-distance between the empirical CDF and ``cdf``, with asymptotic p-value."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n < 1:
        raise InputError("Kolmogorov-Smirnov needs at least one sample")
    f = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    d = float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))
    return d, kolmogorov_sf(math.sqrt(n) * d)
