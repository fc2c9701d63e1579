"""Exception hierarchy shared across the toolkit."""


class SegcalError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(SegcalError):
    """Input violates a documented precondition or invariant."""


class FormatError(SegcalError):
    """A byte stream does not parse as one of the accepted file formats."""


class DegenerateDomainError(SegcalError):
    """A decomposition domain has (numerically) vanishing area."""


class InitializationError(SegcalError):
    """Optimizer initialization failed to produce a finite objective."""
