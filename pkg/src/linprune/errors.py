"""Exception taxonomy shared across the toolkit.

The CLI maps these onto distinct exit codes, so new error sites should
raise the most specific class that applies.
"""


class LinpruneError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(LinpruneError):
    """A structural precondition was violated (shapes, ranges, missing data)."""


class NumericalError(LinpruneError):
    """A numerical precondition failed (non-finite values, rank deficiency)."""


class FormatError(LinpruneError):
    """A model or batch file does not conform to the on-disk format."""


class BadMagicError(FormatError):
    """File does not start with the expected magic bytes."""


class UnsupportedVersionError(FormatError):
    """File declares a format version this build does not understand."""


class TruncatedPayloadError(FormatError):
    """Header or a declared blob extends past the end of the file."""


class HeaderPayloadMismatchError(FormatError):
    """Payload size disagrees with the extents declared in the header."""
