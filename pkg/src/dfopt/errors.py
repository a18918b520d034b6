"""Exception types shared across the package."""


class DfoptError(Exception):
    """Base class for all package errors."""


class ValidationError(DfoptError):
    """A domain object violates a structural invariant."""


class DomainError(DfoptError):
    """An operation was called outside its contract (bad argument)."""


class SizeGuardError(DomainError):
    """Refused: the instance is too large for an exhaustive routine."""


class ConfigError(DfoptError):
    """A generator or experiment configuration is invalid."""


class SolverError(DfoptError):
    """The LP solver failed; carries condition diagnostics, never a wrong answer."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class IterationLimitError(SolverError):
    """An iterative procedure hit its round/pivot cap before converging."""


class ContractViolation(DfoptError):
    """An internal precondition between cooperating operations was broken."""
