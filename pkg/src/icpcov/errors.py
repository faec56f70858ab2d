"""Exception types raised across the package."""

from __future__ import annotations

import numpy as np


class IcpCovError(Exception):
    """Base class for all package errors."""


class InvalidArgument(IcpCovError, ValueError):
    pass


class DimensionMismatch(IcpCovError, ValueError):
    pass


class MissingNormals(IcpCovError, ValueError):
    pass


class MissingAbscissae(IcpCovError, ValueError):
    pass


class DegenerateConfiguration(IcpCovError):
    """The fixed-matching minimizer is not unique."""


class SingularSystem(IcpCovError):
    """Full-space solve requested on a rank-deficient Hessian.

    ``null_basis`` holds orthonormal columns spanning the unobservable
    motion directions, so callers can fall back to an observable-subspace
    solve.
    """

    def __init__(self, message: str, null_basis: np.ndarray):
        super().__init__(message)
        self.null_basis = null_basis


class InsufficientData(IcpCovError, ValueError):
    pass


class BasisMismatch(IcpCovError, ValueError):
    pass


class TooManyFailures(IcpCovError):
    pass
