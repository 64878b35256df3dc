"""Exception types raised by the package."""

import numpy as np


class HalfSpectralError(Exception):
    """Base class for all package errors."""


class DomainError(HalfSpectralError, ValueError):
    """An argument lies outside the domain of a model function."""


class ConfigError(HalfSpectralError, ValueError):
    """Invalid configuration: bad parameter names, grid sizes, options."""


class NumericError(HalfSpectralError, ArithmeticError):
    """A numerical quantity came out non-finite or failed a sanity check."""


class AssemblyError(HalfSpectralError, KeyError):
    """A kernel table does not cover the pairs or lags a layout needs."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class IndefiniteMatrixError(HalfSpectralError, np.linalg.LinAlgError):
    """Cholesky factorization failed.

    Attributes
    ----------
    pivot : int
        Zero-based index of the leading minor that is not positive definite.
    """

    def __init__(self, pivot, message=None):
        self.pivot = int(pivot)
        super().__init__(message or f"matrix is not positive definite (failing pivot {self.pivot})")


class ConditioningWarning(UserWarning):
    """Emitted when an information matrix is numerically singular in some directions."""
