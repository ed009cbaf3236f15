"""MFTraj exceptions."""

from __future__ import annotations


class MFTrajError(Exception):
    """Base class for all errors raised by mftraj."""


class ConfigError(MFTrajError, ValueError):
    """Invalid configuration value or incompatible settings."""


class ParseError(MFTrajError):
    """Malformed input row."""

    def __init__(self, message: str, line: int | None = None) -> None:
        """Initialize the error with an optional 1-based file line number."""
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(MFTrajError):
    """Input is well formed but violates the scene schema."""


class TimingError(MFTrajError):
    """Frames are not uniformly spaced."""


class BoundsError(MFTrajError, IndexError):
    """Index or count outside its valid range."""


class InputError(MFTrajError, ValueError):
    """Input values cannot be processed (non-finite, empty)."""


class ShapeError(MFTrajError, ValueError):
    """Tensor shapes are incompatible for an operation."""


class NumericError(MFTrajError):
    """A numeric routine failed to converge."""


class TrainingError(MFTrajError):
    """Training diverged."""

    def __init__(self, message: str, step: int) -> None:
        """Initialize the error with the optimizer step that failed."""
        self.step = step
        super().__init__(f"step {step}: {message}")


class DeterminismError(MFTrajError):
    """A function expected to be deterministic returned different values."""


class CheckpointError(MFTrajError):
    """Checkpoint file is unreadable or incompatible."""
