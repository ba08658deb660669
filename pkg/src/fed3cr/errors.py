"""Shared exception and warning types."""


class ShapeError(ValueError):
    """Operands have incompatible shapes."""


class ParseError(ValueError):
    """A data file could not be parsed; carries the offending line number."""

    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class ConfigurationError(ValueError):
    """Invalid or unsatisfiable configuration (unknown key, empty dataset, ...)."""


class DataError(ValueError):
    """A dataset violates a protocol precondition."""


class SplitError(DataError):
    """A client cannot be split into train/test."""


class AggregationError(ValueError):
    """Server aggregation received no usable uploads."""


class EvaluationError(RuntimeError):
    """A numeric evaluation produced a non-finite value."""


class ProtocolError(ValueError):
    """The evaluation protocol was violated (e.g. missing test item)."""


class DegenerateInputWarning(UserWarning):
    """A zero-norm vector or all-zero table was handled by a fallback."""


class ReplacementSamplingWarning(UserWarning):
    """The negative-sampling universe was too small; sampled with replacement."""
