"""Exception types shared across the package."""

from __future__ import annotations

from typing import Any


class KmsGraphError(Exception):
    """Base class for all library errors."""


class ValidationError(KmsGraphError, ValueError):
    """Malformed input, unknown vertex, or violated precondition."""


class UncertifiedFamily(KmsGraphError):
    """An infinite weight family was queried without a usable tail bound."""


class BudgetExhausted(KmsGraphError):
    """A computation ran out of budget; ``partial`` carries what was certified."""

    def __init__(self, message: str, partial: Any = None) -> None:
        super().__init__(message)
        self.partial = partial


class CertificateFailed(KmsGraphError):
    """A declared quantity failed its verification certificate."""


class EmptyInterval(ValidationError):
    pass


class SlackExhausted(KmsGraphError):
    """The strict inequality required by the greedy completion could not be certified."""


class NotSuperHarmonic(KmsGraphError):
    def __init__(self, message: str, witness: Any = None) -> None:
        super().__init__(message)
        self.witness = witness


class NotHarmonic(KmsGraphError):
    def __init__(self, message: str, witness: Any = None) -> None:
        super().__init__(message)
        self.witness = witness


class InsufficientSupport(KmsGraphError):
    pass


class IncompleteExitData(KmsGraphError):
    def __init__(self, message: str, partial: Any = None) -> None:
        super().__init__(message)
        self.partial = partial


class NotABareExit(ValidationError):
    pass


class NotSummable(KmsGraphError):
    """A vertex or exit was certified not to be summable at the requested ``beta``."""


class SummabilityUndecided(KmsGraphError):
    def __init__(self, message: str, partial: Any = None) -> None:
        super().__init__(message)
        self.partial = partial
