"""Shared exception types."""


class DimensionError(ValueError):
    """Shapes of the operands are incompatible for the requested op."""


class DegenerateInputError(ValueError):
    """Numerically degenerate input (near-zero denominator, norm, or mask)."""


class InsufficientDiversityError(ValueError):
    """Not enough distinct codes to build the requested positive pairs."""


class ConfigError(ValueError):
    """Invalid or unknown configuration field."""


class CheckpointFormatError(ValueError):
    """Checkpoint file is corrupt or has an unsupported version."""
