"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operands have incompatible or unsupported shapes."""


class ContractError(ValueError):
    """A documented precondition was violated by the caller."""


class DegenerateVectorError(ValueError):
    """A vector with (near-)zero norm was passed where a direction is required."""


class ConstraintError(ValueError):
    """A data-split request violates a support constraint.

    Carries a stable ``code`` naming the constraint so callers and tests can
    match on it without parsing the message.
    """

    def __init__(self, code, message):
        super().__init__(f"[{code}] {message}")
        self.code = code


class FormatError(ValueError):
    """A binary file is malformed; ``offset`` is the failing byte position."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset
