"""Population models, data generation and Monte Carlo size/power runs."""

from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Literal, Optional

import numpy as np
from scipy.stats import norm

from .errors import BetaTestError, NotPSDError
from .pillai import KurtosisPair, resolve_kurtosis, run_test

log = logging.getLogger(__name__)

DEFAULT_SEED = 20240607
MODEL_STREAM = (1 << 64) - 1
THREADS_ENV = "BETATEST_THREADS"
SQRT3 = math.sqrt(3.0)

Dist = Literal["normal", "uniform"]


def substream(seed: int, index: int) -> np.random.Generator:
    """Philox generator keyed by ``(seed, index)``.

    The key is the 128-bit pair itself, so replicate ``index`` always sees the
    same draws no matter which worker runs it or in what order.
    """
    if not 0 <= index < (1 << 64):
        raise ValueError(f"stream index out of range: {index}")
    key = (int(seed) % (1 << 64)) | (int(index) << 64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class ModelSpec:
    model_id: int
    p: int
    seed: int = DEFAULT_SEED

    def __post_init__(self) -> None:
        if self.model_id not in (1, 2, 3, 4):
            raise ValueError(f"model_id must be 1-4, got {self.model_id}")
        if self.p < 1:
            raise ValueError("p must be positive")
        if self.model_id == 3 and self.p < 5:
            raise ValueError("model 3 needs p >= 5")


def make_sigma(spec: ModelSpec) -> np.ndarray:
    """Population covariance of sample 1 for models 1-4."""
    p = spec.p
    if spec.model_id == 1:
        return np.eye(p)
    if spec.model_id == 2:
        sigma = np.eye(p)
        sigma[0, 0] = float(p) ** 2
        return sigma
    if spec.model_id == 3:
        rng = substream(spec.seed, MODEL_STREAM)
        d = rng.uniform(0.5, 2.5, size=p)
        star = np.eye(p)
        for start in range(0, p, 5):
            stop = min(start + 5, p)
            block = star[start:stop, start:stop]
            block[:] = 0.5
            np.fill_diagonal(block, 1.0)
        root_d = np.sqrt(d)
        return root_d[:, None] * star * root_d[None, :]
    return 0.5 * np.eye(p) + 0.5 * np.ones((p, p))


def sqrt_psd(sigma: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root through the eigendecomposition."""
    sigma = np.asarray(sigma, dtype=float)
    sigma = (sigma + sigma.T) / 2
    w, v = np.linalg.eigh(sigma)
    scale = max(np.abs(w).max(), 1.0) if w.size else 1.0
    if w.size and w[0] < -1e-10 * scale:
        raise NotPSDError(f"matrix has eigenvalue {w[0]:.3g} < 0")
    w = np.clip(w, 0.0, None)
    root = (v * np.sqrt(w)) @ v.T
    return (root + root.T) / 2


def sample_population(dist: Dist, n: int, root: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """``n`` rows of ``root @ x`` with i.i.d. standardized entries of ``x``."""
    if n < 2:
        raise ValueError("n must be at least 2")
    p = root.shape[0]
    if dist == "normal":
        x = rng.standard_normal((n, p))
    elif dist == "uniform":
        x = rng.uniform(-SQRT3, SQRT3, size=(n, p))
    else:
        raise ValueError(f"unknown distribution {dist!r}")
    return x @ root.T


# Extra statistics: name -> fn(data1, data2) -> standardized value, rejected two-sided.
_EXTRA_STATISTICS: dict[str, Callable[[np.ndarray, np.ndarray], float]] = {}
BUILTIN_STATISTICS = ("T1", "T2")


def register_statistic(name: str, fn: Callable[[np.ndarray, np.ndarray], float]) -> None:
    """Add a competing statistic to the harness."""
    if name in BUILTIN_STATISTICS:
        raise ValueError(f"{name} is built in")
    _EXTRA_STATISTICS[name] = fn


def unregister_statistic(name: str) -> None:
    _EXTRA_STATISTICS.pop(name, None)


@dataclass(frozen=True)
class ExperimentConfig:
    """One cell of a size/power table.

    ``alt_scale`` fixes how ``delta`` enters sample 2: ``"data"`` multiplies
    the observations by ``1 + delta/n1`` (so the covariance gains the square
    of that factor), ``"covariance"`` multiplies the covariance itself.
    """

    model: int = 1
    dist: Dist = "normal"
    n1: int = 50
    n2: int = 70
    p: int = 40
    delta: float = 0.0
    reps: int = 1000
    alpha_level: float = 0.05
    seed: int = DEFAULT_SEED
    statistics: tuple[str, ...] = ("T1", "T2")
    kurtosis: object = "normal"
    center: bool = True
    alt_scale: Literal["data", "covariance"] = "data"

    def __post_init__(self) -> None:
        if self.reps < 1:
            raise ValueError(f"reps must be positive, got {self.reps}")
        if not 0 < self.alpha_level < 1:
            raise ValueError(f"alpha_level must lie in (0, 1), got {self.alpha_level}")
        if self.delta < 0:
            raise ValueError("delta must be non-negative")
        if self.dist not in ("normal", "uniform"):
            raise ValueError(f"unknown distribution {self.dist!r}")
        if self.alt_scale not in ("data", "covariance"):
            raise ValueError(f"unknown alt_scale {self.alt_scale!r}")
        for name in self.statistics:
            if name not in BUILTIN_STATISTICS and name not in _EXTRA_STATISTICS:
                raise ValueError(f"unknown statistic {name!r}")
        if not 0 <= self.seed < (1 << 64):
            raise ValueError("seed must be an unsigned 64-bit integer")

    @property
    def model_spec(self) -> ModelSpec:
        return ModelSpec(self.model, self.p, self.seed)

    @property
    def sample2_factor(self) -> float:
        """Multiplier applied to the square root of sigma for sample 2."""
        factor = 1 + self.delta / self.n1
        return factor if self.alt_scale == "data" else math.sqrt(factor)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["statistics"] = list(self.statistics)
        k = self.kurtosis
        out["kurtosis"] = k.to_dict() if isinstance(k, KurtosisPair) else (list(k) if isinstance(k, tuple) else k)
        return out


@dataclass
class PowerRow:
    config: ExperimentConfig
    rejection_rate: dict[str, float]
    rejections: dict[str, int]
    reps_used: int
    wall_time: float
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "rejection_rate": dict(self.rejection_rate),
            "rejections": dict(self.rejections),
            "reps_used": self.reps_used,
            "wall_time": self.wall_time,
            "warnings": list(self.warnings),
        }


def worker_count(requested: Optional[int] = None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer %s=%r", THREADS_ENV, env)
    return os.cpu_count() or 1


def _replicate(config: ExperimentConfig, kurt, root1: np.ndarray, root2: np.ndarray, index: int) -> np.ndarray:
    rng = substream(config.seed, index)
    data1 = sample_population(config.dist, config.n1, root1, rng)
    data2 = sample_population(config.dist, config.n2, root2, rng)
    builtin = [s for s in config.statistics if s in BUILTIN_STATISTICS]
    values = {}
    if builtin:
        for report in run_test(data1, data2, builtin, kurt, config.center):
            values[report.statistic_name] = report.standardized
    for name in config.statistics:
        if name not in values:
            values[name] = float(_EXTRA_STATISTICS[name](data1, data2))
    return np.array([values[s] for s in config.statistics])


def simulate_statistics(
    config: ExperimentConfig, workers: Optional[int] = None
) -> tuple[np.ndarray, list[str]]:
    """Standardized statistics for every replicate.

    Returns a ``(reps, len(statistics))`` array with NaN rows for replicates
    that raised, plus one warning per failed replicate.
    """
    sigma = make_sigma(config.model_spec)
    root1 = sqrt_psd(sigma)
    root2 = config.sample2_factor * root1
    # estimation is per replicate; every other policy is fixed for the run
    kurt = config.kurtosis if config.kurtosis == "estimate" else resolve_kurtosis(config.kurtosis)
    out = np.full((config.reps, len(config.statistics)), np.nan)
    errors: list[str] = []

    def run_chunk(indices: range) -> list[tuple[int, Optional[np.ndarray], Optional[str]]]:
        results = []
        for i in indices:
            try:
                results.append((i, _replicate(config, kurt, root1, root2, i), None))
            except (BetaTestError, np.linalg.LinAlgError) as exc:
                results.append((i, None, f"replicate {i} failed: {exc}"))
        return results

    n_workers = min(worker_count(workers), config.reps)
    chunk = max(1, math.ceil(config.reps / (4 * n_workers)))
    chunks = [range(s, min(s + chunk, config.reps)) for s in range(0, config.reps, chunk)]
    if n_workers == 1:
        batches = map(run_chunk, chunks)
    else:
        pool = ThreadPoolExecutor(max_workers=n_workers)
        batches = pool.map(run_chunk, chunks)
    try:
        for batch in batches:
            for i, values, err in batch:
                if err is None:
                    out[i] = values
                else:
                    errors.append(err)
    finally:
        if n_workers > 1:
            pool.shutdown()
    errors.sort(key=lambda s: int(s.split()[1]))
    for err in errors:
        log.warning(err)
    return out, errors


def run_experiment(config: ExperimentConfig, workers: Optional[int] = None) -> PowerRow:
    """Empirical rejection rates of the configured statistics at ``alpha_level``."""
    start = time.perf_counter()
    values, errors = simulate_statistics(config, workers)
    ok = ~np.isnan(values).any(axis=1)
    used = int(ok.sum())
    rejections = {}
    rates = {}
    for j, name in enumerate(config.statistics):
        count = int(np.sum(2 * norm.sf(np.abs(values[ok, j])) < config.alpha_level))
        rejections[name] = count
        rates[name] = count / used if used else float("nan")
    warnings = list(errors)
    if errors:
        warnings.append(f"{len(errors)} of {config.reps} replicates excluded")
    return PowerRow(config, rates, rejections, used, time.perf_counter() - start, warnings)
