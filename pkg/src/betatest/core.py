"""Sample covariances, the Beta-matrix spectrum and the raw modified statistics.

The Beta matrix of two samples is ``B = S1 (S1 + w S2)^{-1}`` where ``w`` is
the ratio of the effective sample sizes.  Its eigenvalues lie in [0, 1]; when
``p`` exceeds an effective sample size some of them are pinned at exactly 0
or 1 and carry no information.  The modified statistics drop those.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import DegenerateSampleError, DesignError, InputError, SingularPencilError

EIG_EPS = 1e-10
DETERMINISTIC_TOL = 1e-8


def as_data_matrix(values, name: str = "data") -> np.ndarray:
    """Validate an n x p observation matrix (rows are observations)."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise InputError(f"{name}: expected a 2-D array, got shape {arr.shape}")
    if arr.shape[1] < 1:
        raise InputError(f"{name}: needs at least one column")
    if arr.shape[0] < 2:
        raise DegenerateSampleError(
            f"{name}: needs at least 2 observations, got {arr.shape[0]}"
        )
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))[0]
        raise InputError(f"{name}: non-finite entry at row {bad[0]}, column {bad[1]}")
    return arr


@dataclass(frozen=True)
class TwoSampleDesign:
    """Sample sizes and dimension of a two-sample problem.

    With ``centered=True`` (the default) each sample loses one degree of
    freedom to mean estimation, and every ratio below is formed from the
    effective sizes ``n_l - 1``.  With ``centered=False`` the data are taken
    to have known zero mean and the raw sizes are used.
    """

    n1: int
    n2: int
    p: int
    centered: bool = True

    def __post_init__(self) -> None:
        for name in ("n1", "n2", "p"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise DesignError(f"{name} must be a positive integer, got {value!r}")
        if self.n1 < 2 or self.n2 < 2:
            raise DegenerateSampleError(
                f"each sample needs at least 2 observations (n1={self.n1}, n2={self.n2})"
            )
        if self.p > self.dof1 + self.dof2:
            bound = "n1+n2-2" if self.centered else "n1+n2"
            raise DesignError(
                f"p={self.p} violates p <= {bound} = {self.dof1 + self.dof2}; "
                "the pooled covariance would be singular"
            )

    @classmethod
    def from_data(cls, data1, data2, centered: bool = True) -> TwoSampleDesign:
        d1 = as_data_matrix(data1, "sample 1")
        d2 = as_data_matrix(data2, "sample 2")
        if d1.shape[1] != d2.shape[1]:
            raise InputError(
                f"samples disagree on dimension: {d1.shape[1]} vs {d2.shape[1]} columns"
            )
        return cls(d1.shape[0], d2.shape[0], d1.shape[1], centered)

    @property
    def dof1(self) -> int:
        return self.n1 - 1 if self.centered else self.n1

    @property
    def dof2(self) -> int:
        return self.n2 - 1 if self.centered else self.n2

    @property
    def y1n(self) -> float:
        return self.p / self.dof1

    @property
    def y2n(self) -> float:
        return self.p / self.dof2

    @property
    def hn(self) -> float:
        return math.sqrt(max(self.h2, 0.0))

    @property
    def h2(self) -> float:
        y1, y2 = self.y1n, self.y2n
        return y1 + y2 - y1 * y2

    @property
    def c1(self) -> float:
        return self.dof1 / (self.dof1 + self.dof2)

    @property
    def c2(self) -> float:
        return self.dof2 / (self.dof1 + self.dof2)

    @property
    def alpha_n(self) -> float:
        """Weight of S2 in the pooled matrix."""
        return self.dof2 / self.dof1

    @property
    def k0(self) -> int:
        return max(0, self.p - self.dof1)

    @property
    def k1(self) -> int:
        return max(0, self.p - self.dof2)

    def to_dict(self) -> dict:
        return {
            "n1": self.n1,
            "n2": self.n2,
            "p": self.p,
            "centered": self.centered,
            "y1n": self.y1n,
            "y2n": self.y2n,
            "hn": self.hn,
            "c1": self.c1,
            "c2": self.c2,
            "alpha_n": self.alpha_n,
        }


@dataclass(frozen=True, eq=False)
class BetaSpectrum:
    """Sorted Beta-matrix eigenvalues with the deterministic 0/1 counts."""

    all_eigs: np.ndarray
    k0: int
    k1: int
    warnings: tuple[str, ...] = field(default=())

    @property
    def p(self) -> int:
        return len(self.all_eigs)

    @property
    def retained(self) -> np.ndarray:
        return self.all_eigs[self.k0 : self.p - self.k1]

    def complement(self) -> BetaSpectrum:
        """Spectrum of B(X2, X1), which equals I - B(X1, X2)."""
        return BetaSpectrum(
            np.sort(1.0 - self.all_eigs), self.k1, self.k0, self.warnings
        )


def sample_covariance(data, center: bool = True) -> np.ndarray:
    """Sample covariance of the rows of ``data``.

    Centered: ``(1/(n-1)) sum (z_j - zbar)(z_j - zbar)'``.  Not centered
    (known zero mean): ``(1/n) sum z_j z_j'``.
    """
    x = as_data_matrix(data)
    n = x.shape[0]
    if center:
        x = x - x.mean(axis=0)
        s = x.T @ x / (n - 1)
    else:
        s = x.T @ x / n
    return (s + s.T) / 2


def beta_spectrum(s1: np.ndarray, s2: np.ndarray, design: TwoSampleDesign) -> BetaSpectrum:
    """Eigenvalues of ``S1 (S1 + w S2)^{-1}`` via the pencil ``S1 v = lam M v``.

    ``M`` is Cholesky-factored and the problem reduced to the symmetric matrix
    ``L^{-1} S1 L^{-T}``, so every eigenvalue comes out real.
    """
    s1 = np.asarray(s1, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    p = design.p
    if s1.shape != (p, p) or s2.shape != (p, p):
        raise InputError(f"covariances must be {p}x{p}, got {s1.shape} and {s2.shape}")
    m = s1 + design.alpha_n * s2
    m = (m + m.T) / 2
    try:
        chol = linalg.cholesky(m, lower=True)
    except linalg.LinAlgError:
        raise SingularPencilError(_singular_message(design, "not positive definite")) from None
    norm1 = np.abs(m).sum(axis=0).max()
    rcond, info = linalg.lapack.dpocon(chol.T, norm1)
    if info != 0 or rcond <= p * 1e-12:
        raise SingularPencilError(
            _singular_message(design, f"reciprocal condition estimate {rcond:.3g}")
        )
    half = linalg.solve_triangular(chol, s1, lower=True)
    reduced = linalg.solve_triangular(chol, half.T, lower=True)
    reduced = (reduced + reduced.T) / 2
    eigs = linalg.eigvalsh(reduced)
    if eigs[0] < -EIG_EPS or eigs[-1] > 1 + EIG_EPS:
        raise SingularPencilError(
            f"Beta eigenvalues escaped [0, 1] (min {eigs[0]:.3g}, max {eigs[-1]:.3g}); "
            "pencil too ill-conditioned"
        )
    eigs = np.clip(eigs, 0.0, 1.0)

    k0, k1 = design.k0, design.k1
    warnings = []
    near0 = int(np.sum(eigs < DETERMINISTIC_TOL))
    near1 = int(np.sum(eigs > 1 - DETERMINISTIC_TOL))
    if near0 != k0 or near1 != k1:
        warnings.append(
            f"degenerate rank: found {near0} eigenvalues near 0 and {near1} near 1, "
            f"rank formulas give k0={k0}, k1={k1}; data may not be from a continuous law"
        )
    return BetaSpectrum(eigs, k0, k1, tuple(warnings))


def _singular_message(design: TwoSampleDesign, detail: str) -> str:
    bound = design.dof1 + design.dof2
    return (
        f"pooled matrix S1 + {design.alpha_n:.6g}*S2 is numerically singular ({detail}); "
        f"p={design.p} against bound p <= {bound} (margin {bound - design.p}), "
        "or the data are degenerate"
    )


def modified_trace(spectrum: BetaSpectrum) -> float:
    """Sum of the Beta eigenvalues with the deterministic zeros and ones removed."""
    return float(np.sum(spectrum.retained))


def modified_quadratic(spectrum: BetaSpectrum, design: TwoSampleDesign) -> float:
    """Paired quadratic statistic over the retained eigenvalues.

    Each eigenvalue ``lam`` of B(X1, X2) contributes
    ``c1 (lam/c1 - 1)^2 + c2 ((1 - lam)/c2 - 1)^2``; ``1 - lam`` is the matching
    eigenvalue of B(X2, X1).
    """
    lam = spectrum.retained
    c1, c2 = design.c1, design.c2
    return float(np.sum(c1 * (lam / c1 - 1) ** 2 + c2 * ((1 - lam) / c2 - 1) ** 2))


def data_spectrum(data1, data2, center: bool = True) -> tuple[TwoSampleDesign, BetaSpectrum]:
    """Design and Beta spectrum straight from two observation matrices."""
    design = TwoSampleDesign.from_data(data1, data2, centered=center)
    s1 = sample_covariance(data1, center)
    s2 = sample_covariance(data2, center)
    return design, beta_spectrum(s1, s2, design)
