"""Exception types shared across the package."""


class PaircorefError(Exception):
    """Base class for all package errors."""


class ParseError(PaircorefError):
    """A line-oriented input file could not be parsed."""

    def __init__(self, path, line_number: int, message: str):
        super().__init__(f"{path}:{line_number}: {message}")
        self.path = str(path)
        self.line_number = line_number


class ValidationError(PaircorefError):
    """A parsed record violates a structural invariant."""


class ConfigError(PaircorefError):
    """Inconsistent configuration, schema version or dimension mismatch."""


class FormatError(PaircorefError):
    """A binary file has a bad magic, bad version or truncated payload."""


class UndefinedMetricError(PaircorefError):
    """A metric is undefined for the given inputs (e.g. single-class AUC)."""


class TrainingDivergedError(PaircorefError):
    """Loss became non-finite during training."""
