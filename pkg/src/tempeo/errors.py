"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes, so keep them distinct.
"""


class TempeoError(Exception):
    pass


class InvalidDepthError(TempeoError, ValueError):
    pass


class SizeError(TempeoError, ValueError):
    """Raster dimensions do not agree, or a raster is too small for the op."""


class UnitsError(TempeoError, ValueError):
    pass


class DomainError(TempeoError, ValueError):
    pass


class SingularRotationError(TempeoError, ValueError):
    pass


class NoSupportError(TempeoError, ValueError):
    """No valid pixels remain to reduce over."""


class FormatError(TempeoError, ValueError):
    """Malformed or unexpected on-disk data."""
