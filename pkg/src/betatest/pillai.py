"""Centering and scaling constants, kurtosis handling and the T1/T2 tests.

All constants are functions of the dimension-to-sample ratios ``y1`` and
``y2`` (see :class:`~betatest.core.TwoSampleDesign`) and the excess
kurtoses ``delta1``, ``delta2`` of the two populations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Literal, Union

import numpy as np
from scipy import linalg
from scipy.stats import norm

from .core import (
    BetaSpectrum,
    TwoSampleDesign,
    as_data_matrix,
    data_spectrum,
    modified_quadratic,
    modified_trace,
)
from .errors import (
    DegenerateDesignError,
    EstimatorUndefinedError,
    InputError,
    InvalidKurtosisError,
)

KURTOSIS_FLOOR = -2.0
H2_TOL = 1e-12


def _h2(y1: float, y2: float) -> float:
    return y1 + y2 - y1 * y2


def limit_l(y1: float, y2: float) -> float:
    """Per-dimension limit of the modified trace."""
    out = y2 / (y1 + y2)
    if y2 > 1:
        out -= (y2 - 1) / y2
    return out


def mean_mu(y1: float, y2: float, delta1: float = 0.0, delta2: float = 0.0) -> float:
    """Kurtosis mean correction of the modified trace."""
    core = y1**2 * y2**2 * _h2(y1, y2) / (y1 + y2) ** 4
    return -delta1 * core - delta2 * core


def var_nu2(y1: float, y2: float, delta1: float = 0.0, delta2: float = 0.0) -> float:
    """Limiting variance of the modified trace."""
    h2 = _check_h2(y1, y2)
    s = y1 + y2
    out = 2 * y1**2 * y2**2 * h2 / s**4 + (y1 * delta1 + y2 * delta2) * y1**2 * y2**2 * h2**2 / s**6
    return _check_positive(out, "nu^2", delta1, delta2)


def limit_l_tilde(y1: float, y2: float) -> float:
    """Per-dimension limit of the paired quadratic statistic."""
    out = y1 * y2 / (y1 + y2)
    if y1 > 1:
        out += (1 - y1) * y2 / y1**2
    if y2 > 1:
        out += y1 * (1 - y2) / y2**2
    return out


def mean_mu_tilde(y1: float, y2: float, delta1: float = 0.0, delta2: float = 0.0) -> float:
    h2 = _h2(y1, y2)
    s = y1 + y2
    return (
        y1 * y2 * h2 / s**2
        + delta1 * y1**2 * y2 * h2 * (h2 + 2 * y2 * (y2 - y1)) / s**4
        + delta2 * y2**2 * y1 * h2 * (h2 + 2 * y1 * (y1 - y2)) / s**4
    )


def var_nu2_tilde(y1: float, y2: float, delta1: float = 0.0, delta2: float = 0.0) -> float:
    h2 = _check_h2(y1, y2)
    s = y1 + y2
    d = (y1 - y2) ** 2
    out = (
        4 * y1**2 * y2**2 * h2 * (h2 + 2 * d) / s**4
        + (y1 * delta1 + y2 * delta2) * 4 * y1**2 * y2**2 * h2**2 * d / s**6
    )
    return _check_positive(out, "nu_tilde^2", delta1, delta2)


def _check_h2(y1: float, y2: float) -> float:
    h2 = _h2(y1, y2)
    if h2 <= H2_TOL:
        raise DegenerateDesignError(
            f"h_n^2 = {h2:.3g} at (y1, y2) = ({y1:.6g}, {y2:.6g}); the limiting support "
            "collapses and the statistic cannot be standardized"
        )
    return h2


def _check_positive(value: float, name: str, delta1: float, delta2: float) -> float:
    if not value > 0:
        raise InvalidKurtosisError(
            f"{name} = {value:.6g} is not positive for delta1={delta1}, delta2={delta2}"
        )
    return value


@dataclass(frozen=True)
class KurtosisPair:
    """Excess kurtoses (E x^4 - 3) of the two standardized populations."""

    delta1: float = 0.0
    delta2: float = 0.0
    source: Literal["assumed-normal", "user-supplied", "estimated"] = "assumed-normal"
    warnings: tuple[str, ...] = field(default=())

    @classmethod
    def normal(cls) -> KurtosisPair:
        return cls(0.0, 0.0, "assumed-normal")

    @classmethod
    def fixed(cls, delta1: float, delta2: float) -> KurtosisPair:
        for name, d in (("delta1", delta1), ("delta2", delta2)):
            if not math.isfinite(d) or d < KURTOSIS_FLOOR:
                raise InvalidKurtosisError(f"{name}={d} is below the bound -2 for unit-variance laws")
        return cls(float(delta1), float(delta2), "user-supplied")

    def to_dict(self) -> dict:
        return {
            "delta1": self.delta1,
            "delta2": self.delta2,
            "source": self.source,
            "warnings": list(self.warnings),
        }


def estimate_deltas(data1, data2) -> KurtosisPair:
    """Leave-one-out excess-kurtosis estimators for both populations.

    For sample 1, with ``y = p/(n1+n2-1)``::

        delta1 = (1-y)^2 * sum_j [d_j' (c11 S_1j + c12 S2)^{-1} d_j - p/(1-y)]^2 / (p n1)
                 - 2/(1-y)

    where ``d_j`` is the centered j-th observation and ``S_1j`` the sample
    covariance without it.  Sample 2 is symmetric.  Each leave-one-out
    inverse is a rank-one downdate of one Cholesky factorization.
    """
    x1 = as_data_matrix(data1, "sample 1")
    x2 = as_data_matrix(data2, "sample 2")
    if x1.shape[1] != x2.shape[1]:
        raise InputError("samples disagree on dimension")
    n1, p = x1.shape
    n2 = x2.shape[0]
    if p >= n1 + n2 - 1:
        raise EstimatorUndefinedError(
            f"kurtosis estimator needs p < n1+n2-1 = {n1 + n2 - 1}, got p={p}; "
            "use assumed-normal or user-supplied kurtosis"
        )
    if min(n1, n2) < 3:
        raise EstimatorUndefinedError("kurtosis estimator needs at least 3 observations per sample")
    total = n1 + n2 - 1
    y = p / total
    s1 = np.cov(x1, rowvar=False).reshape(p, p)
    s2 = np.cov(x2, rowvar=False).reshape(p, p)
    d1 = _loo_delta(x1, s1, s2, (n1 - 1) / total, n2 / total, y)
    d2 = _loo_delta(x2, s2, s1, (n2 - 1) / total, n1 / total, y)
    warnings = []
    out = []
    for name, d in (("delta1", d1), ("delta2", d2)):
        if d < KURTOSIS_FLOOR:
            warnings.append(f"estimated {name}={d:.4g} below -2; clamped to -2")
            d = KURTOSIS_FLOOR
        out.append(d)
    return KurtosisPair(out[0], out[1], "estimated", tuple(warnings))


def _loo_delta(x, s_own, s_other, c_own, c_other, y) -> float:
    n, p = x.shape
    dev = x - x.mean(axis=0)
    # (n-2) S_(j) = (n-1) S - n/(n-1) d_j d_j'
    base = c_own * (n - 1) / (n - 2) * s_own + c_other * s_other
    beta = c_own * n / ((n - 1) * (n - 2))
    try:
        factor = linalg.cho_factor(base)
    except linalg.LinAlgError:
        raise EstimatorUndefinedError("pooled leave-one-out matrix is not positive definite") from None
    g = np.einsum("ij,ji->i", dev, linalg.cho_solve(factor, dev.T))
    denom = 1 - beta * g
    if np.any(denom <= 0):
        raise EstimatorUndefinedError("a leave-one-out pooled matrix is singular")
    q = g / denom
    return float((1 - y) ** 2 * np.sum((q - p / (1 - y)) ** 2) / (p * n) - 2 / (1 - y))


@dataclass(frozen=True, eq=False)
class TestReport:
    """Outcome of one standardized test; ``standardized`` is stored as computed."""

    __test__ = False  # keep pytest from collecting this class

    statistic_name: str
    raw_value: float
    limit_term: float
    mean_term: float
    sd_term: float
    standardized: float
    p_value: float
    design: TwoSampleDesign
    kurtosis: KurtosisPair
    k0: int
    k1: int
    retained_min: float
    retained_max: float
    eigenvalues: np.ndarray
    warnings: tuple[str, ...] = ()

    def to_dict(self, include_spectrum: bool = True) -> dict:
        out = {
            "statistic_name": self.statistic_name,
            "raw_value": self.raw_value,
            "limit_term": self.limit_term,
            "mean_term": self.mean_term,
            "sd_term": self.sd_term,
            "standardized": self.standardized,
            "p_value": self.p_value,
            "design": self.design.to_dict(),
            "kurtosis": self.kurtosis.to_dict(),
            "spectrum_summary": {
                "k0": self.k0,
                "k1": self.k1,
                "retained_min": self.retained_min,
                "retained_max": self.retained_max,
            },
            "warnings": list(self.warnings),
        }
        if include_spectrum:
            out["eigenvalues"] = [float(v) for v in self.eigenvalues]
        return out


KurtosisPolicy = Union[str, KurtosisPair, tuple]


def resolve_kurtosis(policy: KurtosisPolicy, data1=None, data2=None) -> KurtosisPair:
    """Turn a policy into a :class:`KurtosisPair`.

    ``policy`` is ``"normal"`` (or ``"assumed-normal"``), ``"estimate"``, a
    ``(delta1, delta2)`` tuple, or a ready ``KurtosisPair``.
    """
    if isinstance(policy, KurtosisPair):
        return policy
    if isinstance(policy, tuple):
        return KurtosisPair.fixed(*policy)
    if policy in ("normal", "assumed-normal"):
        return KurtosisPair.normal()
    if policy == "estimate":
        if data1 is None or data2 is None:
            raise ValueError("kurtosis estimation needs both samples")
        return estimate_deltas(data1, data2)
    raise ValueError(f"unknown kurtosis policy {policy!r}")


def two_sided_p(z: float) -> float:
    return float(2 * norm.sf(abs(z)))


def _report(name, raw, limit, mean, sd, design, kurt, spectrum, warnings) -> TestReport:
    z = (raw - limit - mean) / sd
    retained = spectrum.retained
    return TestReport(
        statistic_name=name,
        raw_value=raw,
        limit_term=limit,
        mean_term=mean,
        sd_term=sd,
        standardized=z,
        p_value=two_sided_p(z),
        design=design,
        kurtosis=kurt,
        k0=spectrum.k0,
        k1=spectrum.k1,
        retained_min=float(retained.min()) if retained.size else float("nan"),
        retained_max=float(retained.max()) if retained.size else float("nan"),
        eigenvalues=spectrum.all_eigs,
        warnings=warnings,
    )


def t1_report(spectrum: BetaSpectrum, design: TwoSampleDesign, kurt: KurtosisPair) -> TestReport:
    y1, y2, d1, d2 = design.y1n, design.y2n, kurt.delta1, kurt.delta2
    sd = math.sqrt(var_nu2(y1, y2, d1, d2))
    return _report(
        "T1",
        modified_trace(spectrum),
        design.p * limit_l(y1, y2),
        mean_mu(y1, y2, d1, d2),
        sd,
        design,
        kurt,
        spectrum,
        spectrum.warnings + kurt.warnings,
    )


def t2_report(spectrum: BetaSpectrum, design: TwoSampleDesign, kurt: KurtosisPair) -> TestReport:
    y1, y2, d1, d2 = design.y1n, design.y2n, kurt.delta1, kurt.delta2
    sd = math.sqrt(var_nu2_tilde(y1, y2, d1, d2))
    return _report(
        "T2",
        modified_quadratic(spectrum, design),
        design.p * limit_l_tilde(y1, y2),
        mean_mu_tilde(y1, y2, d1, d2),
        sd,
        design,
        kurt,
        spectrum,
        spectrum.warnings + kurt.warnings,
    )


_BUILDERS = {"T1": t1_report, "T2": t2_report}


def _which(which: Union[str, Iterable[str]]) -> list[str]:
    if isinstance(which, str):
        names = ["T1", "T2"] if which.lower() == "both" else [which.upper()]
    else:
        names = [w.upper() for w in which]
    for name in names:
        if name not in _BUILDERS:
            raise ValueError(f"unknown statistic {name!r}; choose T1, T2 or both")
    return names


def run_test(
    data1,
    data2,
    which: Union[str, Iterable[str]] = "both",
    kurtosis: KurtosisPolicy = "normal",
    center: bool = True,
) -> list[TestReport]:
    """Run the modified Pillai tests on two observation matrices.

    The Beta spectrum is computed once and shared by the requested statistics.
    ``center=False`` treats both samples as having known zero mean.
    """
    names = _which(which)
    design, spectrum = data_spectrum(data1, data2, center)
    kurt = resolve_kurtosis(kurtosis, data1, data2)
    return [_BUILDERS[name](spectrum, design, kurt) for name in names]


def standardized_values(
    data1, data2, which=("T1", "T2"), kurtosis: KurtosisPolicy = "normal", center: bool = True
) -> dict[str, float]:
    """Standardized statistics only; the hot path of the Monte Carlo harness."""
    return {r.statistic_name: r.standardized for r in run_test(data1, data2, which, kurtosis, center)}
