"""Exception hierarchy shared across the package."""


class ArchRepError(Exception):
    """Base class for all package errors."""


class DimensionError(ArchRepError, ValueError):
    """Operand shapes are incompatible."""


class ConfigurationError(ArchRepError, ValueError):
    """A configuration value is invalid or internally inconsistent."""


class VocabularyError(ArchRepError, KeyError):
    """An operation kind is not part of the encoding vocabulary."""

    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class GraphValidationError(ArchRepError, ValueError):
    """A graph or dataset failed validation."""

    def __init__(self, message: str, violations=None):
        super().__init__(message)
        self.violations = list(violations or [])


class GradientError(ArchRepError, RuntimeError):
    """Backward pass preconditions were violated."""


class NonDeterministicError(ArchRepError, RuntimeError):
    """A function expected to be deterministic returned different values."""


class NumericalError(ArchRepError, FloatingPointError):
    """NaN/Inf encountered during training or evaluation."""
