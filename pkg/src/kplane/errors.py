"""Exception and warning types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class FormatError(ValueError):
    """A serialized file is malformed.

    Carries the byte offset at which the problem was detected.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class TruncationWarning(UserWarning):
    """A quadrature or interpolation domain does not fully cover its target."""
