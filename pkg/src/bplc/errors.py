"""Exception types shared across the package."""


class BplcError(Exception):
    """Base class for all package errors."""


class FormatError(BplcError, ValueError):
    """A word or format descriptor does not match the expected bit layout."""


class UnsupportedFormatError(FormatError):
    """The operation needs exponent bits but the format has none."""


class CodecError(BplcError):
    """The underlying block compressor failed on a plane segment."""

    def __init__(self, message, plane=None):
        super().__init__(message)
        self.plane = plane


class IntegrityError(BplcError):
    """Stored bytes do not decode to what their headers promise."""

    def __init__(self, message, plane=None):
        super().__init__(message)
        self.plane = plane


class ContainerError(BplcError):
    """Malformed container file or manifest."""
