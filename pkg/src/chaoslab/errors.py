"""Exception and warning types shared across the toolkit."""


class ChaosLabError(Exception):
    """Base class for all toolkit errors."""


class DomainError(ChaosLabError, ValueError):
    """Argument outside the mathematical domain of a function."""


class ConfigurationError(ChaosLabError, ValueError):
    """Invalid model, observable, domain or experiment parameters."""


class DivergenceError(ChaosLabError, ArithmeticError):
    """Requested improper integral does not converge."""


class AccuracyError(ChaosLabError, ArithmeticError):
    """Quadrature failed to reach the requested tolerance."""


class DegeneracyError(ChaosLabError, ArithmeticError):
    """Normalising variance is (numerically) zero."""


class EmbeddingError(ChaosLabError, ArithmeticError):
    """Circulant embedding stays indefinite after maximal padding."""


class ResolutionError(ChaosLabError, ValueError):
    """Lattice too coarse to resolve the integration domain."""


class DataError(ChaosLabError, ValueError):
    """Non-finite or otherwise unusable sample data."""


class EvaluationError(ChaosLabError, ArithmeticError):
    """An observable returned non-finite values at quadrature nodes."""


class AccuracyWarning(UserWarning):
    """Result returned but its accuracy target was not verified."""


class ExcludedCaseWarning(UserWarning):
    """Configuration falls in a case where the Gaussian limit is not established."""
