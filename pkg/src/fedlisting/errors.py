"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


class FormatError(ValidationError):
    """Raised when an on-disk artifact is missing, truncated, or malformed."""
