"""Shared exception types.

The CLI maps these onto exit codes: usage problems exit 1, data/validation
problems exit 2, divergence exits 3.
"""


class AlkdError(Exception):
    """Base class for all package errors."""


class DimensionError(AlkdError):
    """Shape or dimension mismatch between operands."""


class ConfigError(AlkdError):
    """Invalid or inconsistent configuration."""


class DataError(AlkdError):
    """Bad input data: malformed records, missing labels, oversize samples."""


class StoreFormatError(DataError):
    """Corrupt or invalid binary store/checkpoint file."""


class DivergenceError(AlkdError):
    """Non-finite value encountered during training or loss evaluation."""


class UndefinedMetricError(AlkdError):
    """A metric is mathematically undefined for the given inputs."""
