"""Exception hierarchy for estimation and inference failures."""


class RkdError(Exception):
    """Base class for all rkdkit errors."""


class ConfigError(RkdError):
    """Invalid run configuration or input file."""


class IdentificationError(RkdError):
    """Too few kernel-positive observations on one side of the kink."""


class IllConditionedError(RkdError):
    """Weighted design is numerically singular (condition number > 1e12)."""


class ConvergenceError(RkdError):
    """Quantile solver hit the iteration cap before reaching tolerance.

    Carries the last objective value so callers can decide whether the
    partial solution is usable.
    """

    def __init__(self, message, objective=None):
        super().__init__(message)
        self.objective = objective


class EmptyWindowError(RkdError):
    """No observations inside the kernel window of a density estimate."""


class PivotalDensityError(RkdError):
    """Nonpositive conditional density at a quantile; pivotal draws undefined."""


class NonpositiveMeanError(RkdError):
    """Baseline conditional mean is nonpositive; Lorenz effect undefined."""


class EstimationError(RkdError):
    """Generic numerical failure in an estimation step."""
