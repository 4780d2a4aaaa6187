"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the requested quantity."""


class BudgetExhausted(RuntimeError):
    """A Monte Carlo run hit its step or time budget before finishing.

    The partially filled report is attached as ``partial`` so callers can
    still emit it.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial
