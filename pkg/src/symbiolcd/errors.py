"""Exception hierarchy shared by every module."""


class SymbioError(Exception):
    """Base class for all package errors."""


class FormatError(SymbioError, ValueError):
    """Malformed or invalid input data."""

    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        parts = []
        if line is not None:
            parts.append(f"line {line}")
        if field is not None:
            parts.append(f"field '{field}'")
        prefix = ", ".join(parts)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class ConfigError(SymbioError, ValueError):
    """Invalid configuration or tunable value."""


class TrainingError(SymbioError, ValueError):
    """Dataset cannot be used to fit a model."""


class ModelFormatError(SymbioError, ValueError):
    """Model or vocabulary file is corrupt, truncated or from another version."""


class FeatureOrderError(SymbioError, ValueError):
    """Model feature order does not match the features supplied."""
