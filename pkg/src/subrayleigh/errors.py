"""Exception hierarchy shared by all modules."""


class DomainError(ValueError):
    """Input outside the domain where an operation is defined."""


class InvalidSourceError(DomainError):
    """Intensity distribution with no usable light (zero or non-finite total)."""


class PreconditionError(DomainError):
    """A structural precondition (centering, commutativity, ...) does not hold."""


class TruncationError(DomainError):
    """Fock-space or series truncation too coarse for the requested accuracy."""

    def __init__(self, message, required_cutoff=None):
        super().__init__(message)
        self.required_cutoff = required_cutoff


class OptimizerError(RuntimeError):
    """Objective returned a non-finite value."""

    def __init__(self, message, x=None):
        super().__init__(message)
        self.x = x
