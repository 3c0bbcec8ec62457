#!/usr/bin/env python3
"""
Error Types

Exception hierarchy of the AEL parameter estimation toolkit.

Every error carries the process exit code the CLI reports for it.
"""

from typing import Optional


class AelEstimationError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class ConfigError(AelEstimationError):
    """Invalid job configuration; the message names the JSON path."""

    exit_code = 2

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class DataError(AelEstimationError):
    """Invalid observation data; names the column and/or file row."""

    exit_code = 3

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[str] = None):
        self.row = row
        self.column = column
        where = []
        if column is not None:
            where.append(f"column '{column}'")
        if row is not None:
            where.append(f"row {row}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(f"{prefix}{message}")


class NumericError(AelEstimationError):
    """Numerical failure in a model, integrator, surrogate or sampler."""

    exit_code = 4


class ModelDomainError(NumericError, ValueError):
    """Model evaluated outside its mathematical domain."""


class IntegrationError(NumericError):
    """ODE integration failed at time ``t``."""

    def __init__(self, message: str, t: float):
        self.t = t
        super().__init__(f"{message} (t = {t!r} s)")


class SurrogateBuildError(NumericError):
    """Surrogate construction failed."""


class AcceptanceError(AelEstimationError):
    """A configured accuracy or fit-quality target was missed."""

    exit_code = 5

    def __init__(self, message: str, achieved: float):
        self.achieved = achieved
        super().__init__(message)
