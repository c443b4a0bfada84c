"""Exception hierarchy shared by the library and the CLI.

Every error carries the process exit code the CLI reports for it.
"""

from typing import Optional


class KHNError(Exception):
    """Base class for all library errors."""

    exit_code: int = 1


class ConfigError(KHNError, ValueError):
    """Invalid or inconsistent configuration."""

    exit_code = 2


class ShapeError(KHNError, ValueError):
    """Tensor or configuration shapes do not agree."""

    exit_code = 2


class DataError(KHNError, ValueError):
    """A data source cannot satisfy the request (too few classes or examples)."""

    exit_code = 3


class IngestionError(DataError):
    """A file on disk could not be read or decoded."""

    def __init__(self, path: str, reason: str):
        self.path = path
        self.reason = reason
        super().__init__(f"cannot ingest {path}: {reason}")


class LabelIndexError(KHNError, IndexError):
    """A class label or class id is outside its valid range."""

    exit_code = 3


class NumericError(KHNError, ArithmeticError):
    """A computation produced a non-finite value."""

    exit_code = 4


class NumericDomainError(NumericError):
    """An operation was applied outside its mathematical domain."""


class TrainingDivergedError(NumericError):
    """Training produced a non-finite loss."""

    def __init__(self, iteration: int, loss: Optional[float], reason: str = "non-finite loss"):
        self.iteration = iteration
        self.loss = loss
        super().__init__(f"training diverged at iteration {iteration} (loss={loss}): {reason}")


class OptimizerStateError(KHNError, RuntimeError):
    """An optimizer was stepped in an invalid state (e.g. a missing gradient)."""

    exit_code = 4


class CheckpointError(KHNError, ValueError):
    """A checkpoint file is truncated or corrupt."""

    exit_code = 5


class IncompatibleCheckpointError(CheckpointError):
    """A checkpoint was written with an unsupported format version."""
