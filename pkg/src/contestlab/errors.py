"""Exception types shared across the package."""


class ContestError(Exception):
    """Base class for all contestlab errors."""


class DomainError(ContestError, ValueError):
    """An argument lies outside the operation's domain."""


class UnsupportedKindError(ContestError):
    """Operation requires a success-function kind it did not receive."""


class StructureError(ContestError):
    """A contest automaton violates a structural requirement."""


class CyclicAutomatonError(StructureError):
    """The acyclic solver was asked to handle an automaton with cycles."""


class ConvergenceError(ContestError):
    """An iterative solve failed to reach its tolerance.

    Carries the last observed residual for diagnostics.
    """

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual


class DegenerateChainError(ContestError):
    """Absorption into terminal states is not almost sure."""


class ValidationError(ContestError):
    """Invalid configuration or non-serializable report content."""
