"""Numerics for limit theorems of integral functionals of stationary Gaussian fields."""

__version__ = "0.1.0"

from .errors import (AccuracyError, AccuracyWarning, ChaosLabError, ConfigurationError,
                     DataError, DegeneracyError, DivergenceError, DomainError, EmbeddingError,
                     EvaluationError, ExcludedCaseWarning, ResolutionError)
from .specialfn import CovarianceModel, bessel_j, cov_eval, gauss_cdf, gauss_quantile

__all__ = ["AccuracyError", "AccuracyWarning", "ChaosLabError", "ConfigurationError", "DataError",
           "DegeneracyError", "DivergenceError", "DomainError", "EmbeddingError", "EvaluationError",
           "ExcludedCaseWarning", "ResolutionError", "CovarianceModel", "bessel_j", "cov_eval",
           "gauss_cdf", "gauss_quantile"]
