"""Modified Pillai trace tests for equality of two high-dimensional covariance matrices."""

from importlib.metadata import PackageNotFoundError, version

from .core import (
    BetaSpectrum,
    TwoSampleDesign,
    beta_spectrum,
    data_spectrum,
    modified_quadratic,
    modified_trace,
    sample_covariance,
)
from .errors import (
    BetaTestError,
    DegenerateDesignError,
    DegenerateSampleError,
    DesignError,
    EstimatorUndefinedError,
    InputError,
    IntegrandError,
    InvalidKurtosisError,
    NotPSDError,
    SingularPencilError,
)
from .esd import EsdParams, density_grid, esd_density, integrate_esd
from .gof import jb_statistic, kolmogorov_sf, ks_statistic
from .pillai import (
    KurtosisPair,
    TestReport,
    estimate_deltas,
    limit_l,
    limit_l_tilde,
    mean_mu,
    mean_mu_tilde,
    run_test,
    var_nu2,
    var_nu2_tilde,
)
from .simulation import (
    ExperimentConfig,
    ModelSpec,
    PowerRow,
    make_sigma,
    register_statistic,
    run_experiment,
    simulate_statistics,
)

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # pragma: no cover - source checkout without install
    __version__ = "0.1.0"
