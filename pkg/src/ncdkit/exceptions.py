"""Exception types shared across the package.

The command line maps these onto exit codes, so library code should raise
the most specific type that applies rather than bare ValueError.
"""


class NCDKitError(Exception):
    """Base class for errors raised by this package."""


class ShapeMismatchError(NCDKitError, ValueError):
    """Operands or data arrays have incompatible shapes."""


class ConfigurationError(NCDKitError, ValueError):
    """A parameter or configuration value is invalid."""


class UsageError(NCDKitError, ValueError):
    """An operation was invoked on input it cannot meaningfully process."""


class GenerationError(NCDKitError, RuntimeError):
    """Synthetic data generation could not satisfy its constraints."""


class CheckpointMismatchError(NCDKitError, ValueError):
    """A checkpoint is incompatible with the requested model or data."""
