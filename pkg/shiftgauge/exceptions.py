"""
Custom exceptions for shiftgauge.

This module defines a hierarchy of exceptions used throughout the library
and the command-line harness so callers can react to specific failures
(bad input, broken files, diverging training) instead of catching a bare
Exception.

Copyright 2026 shiftgauge Project
Licensed under the Apache License, Version 2.0
"""

from typing import Optional

# ============================================================================
# Base Exception
# ============================================================================


class ShiftGaugeError(Exception):
    """
    Base exception for all shiftgauge-specific errors.

    All custom exceptions inherit from this base class, so every
    application error can be caught with:
        except ShiftGaugeError as e:
            ...
    """

    pass


# ============================================================================
# Input Exceptions
# ============================================================================


class InvalidInputError(ShiftGaugeError):
    """
    Raised when an operation receives arguments it cannot work with.

    Exit code: 1

    Examples:
        - Label index outside [0, K)
        - Empty dataset passed to a risk computation
        - Progress value outside [0, 1] for the alpha schedule
    """

    pass


class ShapeError(InvalidInputError):
    """
    Raised when tensor or matrix dimensions do not agree.

    The message always names both offending shapes.
    """

    pass


class FormatError(ShiftGaugeError):
    """
    Raised when a file does not match its declared format.

    Exit code: 1

    Examples:
        - Checkpoint with wrong magic or unsupported version
        - Truncated checkpoint payload
        - Ragged CSV rows, bad IDX magic number
    """

    pass


class ConfigurationError(ShiftGaugeError):
    """
    Raised when an experiment configuration is invalid.

    Exit code: 1

    Examples:
        - Unknown key in the config file
        - Division index outside the network depth
        - Empty seed list
    """

    pass


# ============================================================================
# Runtime Exceptions
# ============================================================================


class TrainingError(ShiftGaugeError):
    """
    Raised when optimisation produces non-finite values.

    Exit code: 2

    Attributes:
        epoch: Epoch index (1-based) where the failure happened, if known
        step: Optimiser step index where the failure happened, if known
    """

    def __init__(
        self, message: str, epoch: Optional[int] = None, step: Optional[int] = None
    ):
        super().__init__(message)
        self.epoch = epoch
        self.step = step


class EstimationError(ShiftGaugeError):
    """
    Raised when an estimator cannot produce a valid estimate.

    Exit code: 2

    Attributes:
        best_infeasible: Best value seen among infeasible candidates, if any
    """

    def __init__(self, message: str, best_infeasible: Optional[float] = None):
        super().__init__(message)
        self.best_infeasible = best_infeasible


class MetricError(ShiftGaugeError):
    """
    Raised when a summary metric is undefined for its inputs.

    Examples:
        - Pearson correlation of a constant series
        - Fewer than two (prediction, truth) pairs
    """

    pass


class OracleError(ShiftGaugeError):
    """Raised when an exact enumeration has an empty feasible set."""

    pass


class InternalError(ShiftGaugeError):
    """Raised when an internal invariant is violated (a bug, not bad input)."""

    pass


# ============================================================================
# Exception Mapping for CLI Exit Codes
# ============================================================================

# Map exception types to process exit codes for the command-line harness
EXIT_CODE_MAP = {
    InvalidInputError: 1,
    ShapeError: 1,
    FormatError: 1,
    ConfigurationError: 1,
    FileNotFoundError: 1,
    TrainingError: 2,
    EstimationError: 2,
    MetricError: 2,
    OracleError: 2,
    InternalError: 2,
    ShiftGaugeError: 2,  # Generic fallback
}


def get_exit_code(exception: Exception) -> int:
    """
    Get the CLI exit code for an exception.

    Args:
        exception: The exception to map

    Returns:
        1 for input/configuration problems, 2 for runtime failures

    Examples:
        >>> get_exit_code(ConfigurationError("unknown key 'foo'"))
        1
        >>> get_exit_code(TrainingError("loss is nan", epoch=3))
        2
        >>> get_exit_code(ValueError("Some error"))
        2
    """
    for exc_type in type(exception).__mro__:
        if exc_type in EXIT_CODE_MAP:
            return EXIT_CODE_MAP[exc_type]
    return 2
