"""Exception hierarchy shared across the package."""


class PseudoregError(Exception):
    """Base class for all package-specific errors."""


class SchemaError(PseudoregError):
    """A declared column is missing or a schema declaration is inconsistent."""


class ValidationError(PseudoregError):
    """Input data violates a precondition (e.g. non-positive follow-up time)."""


class ParseError(PseudoregError):
    """A cell could not be parsed into the declared type."""


class DegenerateDesignError(PseudoregError):
    """The design matrix is rank deficient or a factor has a single level."""


class EstimandUndefinedError(PseudoregError):
    """The product-limit value is undefined (no mass at risk at t0)."""


class OracleError(PseudoregError):
    """A finite-difference oracle was invoked with an invalid step."""


class NonconvergenceError(PseudoregError):
    """The estimating-equation solver failed to converge."""

    def __init__(self, message, last_beta=None, iterations=None):
        super().__init__(message)
        self.last_beta = last_beta
        self.iterations = iterations


class ConditioningError(PseudoregError):
    """A matrix required to be invertible is numerically singular."""


class LeverageError(PseudoregError):
    """Hat-matrix leverages are degenerate (d_kk too close to 1)."""


class HypothesisError(PseudoregError):
    """The linear system C beta = b is inconsistent."""


class BootstrapUnstableError(PseudoregError):
    """Too many bootstrap replicates failed to converge."""
