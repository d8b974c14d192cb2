"""Exception types shared across the workbench.

Every error carries a short wire ``code`` used by the HTTP service and the
CLI when reporting failures to clients.
"""


class WordspotError(Exception):
    """Base class for all workbench errors."""

    code = "Error"


class EmptyCorpusError(WordspotError):
    """Directory contained no supported page images."""

    code = "EmptyCorpus"


class UnreadableImageError(WordspotError):
    """An image file exists but could not be decoded."""

    code = "UnreadableImage"

    def __init__(self, path, reason=""):
        self.path = str(path)
        super().__init__(f"unreadable image: {self.path}" + (f" ({reason})" if reason else ""))


class PageTooSmallError(WordspotError):
    """Page below the 32 px minimum on at least one side."""

    code = "PageTooSmall"


class IoFailureError(WordspotError):
    """Filesystem read/write failed; message names the path."""

    code = "IoFailure"


class SchemaMismatchError(WordspotError):
    """Project file carries an unsupported format-version tag."""

    code = "SchemaMismatch"


class InvalidParamsError(WordspotError):
    """Band-pass sigma ordering (or another parameter invariant) violated."""

    code = "InvalidParams"


class OutOfPageError(WordspotError):
    """User box does not intersect the page."""

    code = "OutOfPage"


class EmptyTemplateError(WordspotError):
    """Marked region contains no ink after cleaning."""

    code = "EmptyTemplate"


class DimensionMismatchError(WordspotError):
    """Template and window shapes differ."""

    code = "DimensionMismatch"


class UnknownMatchError(WordspotError):
    code = "UnknownMatch"


class UnknownQueryError(WordspotError):
    code = "UnknownQuery"


class IllegalTransitionError(WordspotError):
    """Verdict not allowed from the match's current state."""

    code = "IllegalTransition"


class SearchCancelledError(WordspotError):
    """Search handle was cancelled before completion."""

    code = "Cancelled"


class ParseError(WordspotError):
    code = "ParseError"


class SchemaError(WordspotError):
    code = "SchemaError"
