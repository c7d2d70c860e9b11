"""Exception types shared across the package.

CLI exit-code mapping: ConfigError -> 2, OSError -> 3, DataFormatError -> 4.
"""


class ConfigError(ValueError):
    """Invalid configuration or parameters."""


class InvalidInputError(ValueError):
    """An operation was called with inputs it rejects (bad class name, bad label, ...)."""


class DegenerateInputError(InvalidInputError):
    """Input is structurally valid but carries no usable information (e.g. all-zero snapshot)."""


class GenerationError(RuntimeError):
    """Dataset generation could not produce a valid sample."""


class DataFormatError(Exception):
    """Base class for on-disk format problems."""


class BadMagicError(DataFormatError):
    """File does not start with the expected magic bytes."""


class TruncatedFileError(DataFormatError):
    """File ended before the declared payload was complete."""


class ArchitectureMismatchError(DataFormatError):
    """Model file header disagrees with the weight blobs it carries."""
