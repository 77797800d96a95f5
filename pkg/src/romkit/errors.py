"""Exception types shared across the toolkit.

CLI exit-code mapping: configuration problems exit with 2, numerical
failures with 3 (see cli.py).
"""


class RomkitError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(RomkitError):
    """Invalid setup: bad grid tags, inconsistent config keys, bad arguments."""


class ShapeError(RomkitError):
    """Mismatched grids, field kinds, or array lengths."""


class NumericalError(RomkitError):
    """An iterative solver failed to converge or a result left tolerance."""


class StabilityError(NumericalError):
    """Singular or near-singular reduced saddle system (inf-sup failure)."""


class RankError(RomkitError):
    """Requested more modes than the numerical rank supports."""


class TrainingError(NumericalError):
    """Neural-network training diverged (non-finite loss)."""


class FormatError(RomkitError):
    """On-disk bundle or snapshot data does not match the expected format."""
