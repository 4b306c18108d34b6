"""Exception types shared across the package.

The CLI maps these onto exit codes: dataset/checkpoint problems are data
errors (exit 3), numeric blow-ups are numeric failures (exit 4).
"""


class StoryvisError(Exception):
    """Base class for all package-specific errors."""


class DataError(StoryvisError):
    """Problems with datasets, checkpoints or other on-disk artifacts."""


class DatasetNotFoundError(DataError):
    pass


class SchemaVersionError(DataError):
    pass


class CorruptRecordError(DataError):
    """A stored record failed its CRC32 check."""


class StoryGenerationError(DataError):
    """Rejection sampling could not realize the requested difficulty tier."""


class CheckpointError(DataError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointCorruptError(CheckpointError):
    pass


class NumericsError(StoryvisError):
    """Non-finite values encountered in a forward pass or loss."""

    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer


class ConfigError(StoryvisError):
    """Invalid or conflicting configuration."""
