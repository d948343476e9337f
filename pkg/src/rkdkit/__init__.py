"""rkdkit: local treatment effects and uniform inference at regression kinks."""

__version__ = "0.1.0"

from .effects import (
    EffectCurve,
    KinkDesign,
    ldte_at_quantiles,
    rkd_distributional,
    rkd_lorenz,
    rkd_mean,
    rkd_quantile,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    EmptyWindowError,
    EstimationError,
    IdentificationError,
    IllConditionedError,
    NonpositiveMeanError,
    PivotalDensityError,
    RkdError,
)
from .bandwidth import (
    BandwidthSchedule,
    algorithm1_bandwidths,
    algorithm2_lorenz_bandwidths,
    qrkd_bandwidths,
)
from .inference import (
    BootstrapEnsemble,
    TestResult,
    homogeneity_test,
    lorenz_composite_draws,
    multiplier_draws,
    pivotal_draws,
    pointwise_se,
    significance_test,
    uniform_band,
)
from .kernels import KernelConstants, KernelSpec, basis_vector, cross_kernel_matrices, eval_kernel, kernel_constants
from .locfit import ConstrainedFit, Sample, fit_constrained_quantile, fit_constrained_wls, rearrange_monotone, residuals
from .pipeline import AnalysisConfig, EffectReport, analyze
from .simulation import DgpConfig, StudyReport, generate_dgp, run_study, true_effects, true_quantiles

__all__ = [name for name in dir() if not name.startswith("_")]
