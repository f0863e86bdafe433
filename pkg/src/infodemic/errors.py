"""Exception types shared across the package."""


class InfodemicError(Exception):
    """Base class for all package errors."""


class ValidationError(InfodemicError, ValueError):
    """Input does not match the expected schema."""


class MalformedEvent(ValidationError):
    pass


class MissingSource(MalformedEvent):
    pass


class DanglingParent(MalformedEvent):
    pass


class CycleDetected(MalformedEvent):
    pass


class NonMonotoneChild(MalformedEvent):
    pass


class InsufficientNonOverlap(InfodemicError):
    def __init__(self, available: int, needed: int):
        super().__init__(
            f"only {available} non-overlapping events available, {needed} needed "
            "for validation and test"
        )
        self.available = available
        self.needed = needed


class ConfigInvalid(ValidationError):
    pass


class IsolatedAnchor(InfodemicError):
    pass


class NonFiniteLoss(InfodemicError, FloatingPointError):
    pass


class EmptyInput(InfodemicError, ValueError):
    pass


class VersionMismatch(InfodemicError):
    pass


class CorruptCheckpoint(InfodemicError):
    pass
