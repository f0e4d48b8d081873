"""Exception hierarchy shared by the stereo, fuzzy and simulation layers.

Everything derives from ``ValueError`` so callers that only care about
"bad input" can keep catching that.
"""


class StereoAvoidError(ValueError):
    """Root of all domain errors."""


class InvalidDisparityError(StereoAvoidError):
    """Disparity is zero or negative (zero disparity means infinite depth)."""


class InvalidDepthError(StereoAvoidError):
    """Depth is zero or negative."""


class DimensionMismatchError(StereoAvoidError):
    pass


class WindowOutOfBoundsError(StereoAvoidError):
    """A matching window leaves the image."""


class ImageFormatError(StereoAvoidError):
    """File is not a binary 8-bit PGM/PPM this package can read."""


class CalibrationError(StereoAvoidError):
    """Depth lookup-table samples are unusable."""


class RuleBaseError(StereoAvoidError):
    """Unknown variable, term or preset, or a missing crisp input."""


class NoActivationError(StereoAvoidError):
    """Output distribution is zero everywhere; nothing to defuzzify."""


class NoValidDepthError(StereoAvoidError):
    """The pipeline produced no valid depth pixel at all."""


class DeterminismError(StereoAvoidError):
    """Outputs differ across worker counts."""
