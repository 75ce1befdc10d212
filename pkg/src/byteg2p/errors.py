"""Exception hierarchy and process exit codes.

Exit codes: 0 success, 2 configuration problems, 3 data problems
(parsing, splits, checkpoints), 4 numeric failures, 1 anything else.
"""

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class G2PError(Exception):
    """Base class for all toolkit errors."""

    exit_code = EXIT_ERROR


class ConfigError(G2PError):
    """Invalid or inconsistent configuration."""

    exit_code = EXIT_CONFIG


class IncompatibleConfigError(ConfigError):
    """Two configurations that must match do not (e.g. finetune vs checkpoint)."""


class InvalidInputError(G2PError):
    """Caller passed an argument that violates a precondition."""

    exit_code = EXIT_DATA


class InvalidTagError(InvalidInputError):
    """Malformed language tag."""


class FormatError(G2PError):
    """On-disk data does not conform to the expected format."""

    exit_code = EXIT_DATA


class InsufficientDataError(G2PError):
    """Not enough entries to satisfy a requested partition."""

    exit_code = EXIT_DATA


class CheckpointError(G2PError):
    """Checkpoint container is corrupt or structurally invalid."""

    exit_code = EXIT_DATA


class InvalidReferenceError(InvalidInputError):
    """Empty or missing reference pronunciations in scoring."""


class UndefinedCorrelationError(G2PError):
    """Correlation requested on degenerate input (too short or zero variance)."""

    exit_code = EXIT_NUMERIC


class DegenerateBatchError(G2PError):
    """A batch with no valid target tokens reached the loss."""

    exit_code = EXIT_NUMERIC


class NumericError(G2PError):
    """Non-finite values encountered during optimization."""

    exit_code = EXIT_NUMERIC
