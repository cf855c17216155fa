"""Exception hierarchy shared across the package.

Everything raised on purpose derives from PcupError so the CLI can map
library failures to a single nonzero exit code without fishing for
individual types.
"""


class PcupError(Exception):
    """Base class for all errors raised by this package."""


class EmptyInput(PcupError):
    """An operation received a point set with no points."""


class NonFinite(PcupError):
    """Positions or attributes contain NaN or infinity."""


class KTooLarge(PcupError):
    """A neighbor query asked for more neighbors than points available."""


class CountTooLarge(PcupError):
    """A sampler was asked for more points than the input holds."""


class RateTooLarge(PcupError):
    """Down-sampling rate leaves fewer than one point."""


class PatchLargerThanCloud(PcupError):
    """Patch size m exceeds the number of points in the cloud."""


class CloudTooSmall(PcupError):
    """A training pair needs more points than the source cloud has."""


class InsufficientPoints(PcupError):
    """Regrouping was asked for more points than the patches supply."""


class TooFewPoints(PcupError):
    """Geometry up-sampling needs at least two points per patch."""


class DimensionMismatch(PcupError):
    """Mismatched point counts or channel widths between arrays."""


class ShapeMismatch(PcupError):
    """Tensor operands have incompatible shapes."""


class EmptyDataset(PcupError):
    """Training was invoked with no training pairs."""


class TooFewReferencePoints(PcupError):
    """Plane fitting needs more reference points than supplied."""


class ParseError(PcupError):
    """Malformed PLY header or body."""


class MissingProperty(PcupError):
    """PLY vertex element lacks a required property."""


class IoError(PcupError):
    """File could not be read or written."""


class MissingCheckpoint(PcupError):
    """A learned method was requested without a checkpoint."""


class IncompatibleCheckpoint(PcupError):
    """Checkpoint network or configuration does not match the request."""
