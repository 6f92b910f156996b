# Copyright (c) 2025 Apple Inc. Licensed under MIT License.

"""Exception types raised by ssdeconv.

Errors fall in two families that the command line maps to distinct exit
codes: ``DataError`` for malformed inputs and ``NumericError`` for numeric
failures of the estimators and searches.
"""


class SsdeconvError(Exception):
    """Base class for all errors raised by this package."""


class DataError(SsdeconvError, ValueError):
    """Input data is malformed (ragged rows, wrong shapes, too few rows, bad spec)."""


class NumericError(SsdeconvError, ArithmeticError):
    """A numeric procedure cannot produce a meaningful result."""


class SingularMatrixError(NumericError):
    """A matrix that must be invertible is singular or nearly so."""


class VanishingCharacteristicError(NumericError):
    """The measurement-noise characteristic function vanishes on the integration cube."""


class LevelUnreachableError(NumericError):
    """A quantile search never reached the requested level."""


class DensityUnboundedError(NumericError):
    """A density was evaluated at a point where it is unbounded."""


class ReplicateError(SsdeconvError):
    """An experiment replicate failed; carries the replicate index."""

    def __init__(self, replicate: int, cause: BaseException):
        super().__init__(f"replicate {replicate} failed: {cause}")
        self.replicate = replicate
        self.cause = cause
