"""Exception types shared across the package."""


class GmwalkError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(GmwalkError):
    """Invalid input data. Carries the full list of problems found."""

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class EncodingError(GmwalkError):
    """A group element does not match the group it is used with."""


class ResourceLimitError(GmwalkError):
    """A configured support/size guard was exceeded.

    Never a silent truncation: the caller learns how far the
    computation got via ``completed``.
    """

    def __init__(self, message, completed=None):
        self.completed = completed
        super().__init__(message)


class ConsistencyError(GmwalkError):
    """Two computation paths that must agree did not."""
