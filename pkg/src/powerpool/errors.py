"""Exception types raised across the package.

All of them derive from :class:`ValueError` so callers that only care about
"bad input" can catch a single type.
"""


class DegenerateLabelsError(ValueError):
    """Raised when a classification metric needs both classes but gets one."""


class InsufficientDataError(ValueError):
    """Raised when a fit is requested on too short a record."""


class FieldFormatError(ValueError):
    """Raised when a field file is malformed.

    The message always names the byte offset at which the problem was found.
    """

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset
