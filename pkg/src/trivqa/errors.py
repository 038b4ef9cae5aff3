"""Error types shared across the package.

Every error carries a short machine-readable code so the command line
tool can print ``ERROR <code>: <message>`` and exit nonzero.
"""


class TriVqaError(Exception):
    """Base class for all package errors."""

    code = "INTERNAL"

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class ShapeError(TriVqaError):
    """Operand shapes are incompatible with the requested operation."""

    code = "SHAPE"


class ConfigError(TriVqaError):
    """A configuration value is missing, malformed, or out of range."""

    code = "CONFIG"


class DataFormatError(TriVqaError):
    """A dataset file is malformed, truncated, or inconsistent."""

    code = "DATA_FORMAT"


class CheckpointError(TriVqaError):
    """A checkpoint file is malformed or does not match the model."""

    code = "CHECKPOINT"


class SchemaMismatchError(TriVqaError):
    """Dataset schema and checkpoint schema disagree."""

    code = "SCHEMA_MISMATCH"


class NumericsError(TriVqaError):
    """Non-finite values reached a point where only finite values are valid."""

    code = "NUMERICS"


class DivergenceError(NumericsError):
    """Training produced a non-finite loss."""

    code = "DIVERGENCE"


class UsageError(TriVqaError):
    """Command line arguments are invalid or inconsistent."""

    code = "USAGE"
