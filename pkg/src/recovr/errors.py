"""Exception types shared across the toolkit.

Every error carries a short machine-readable ``code`` used by the CLI's
stderr JSON object and the HTTP service's error payloads, plus a normal
human-readable message.  Input problems subclass :class:`InputError`
(CLI exit code 2), numerical failures subclass :class:`NumericalError`
(exit code 3).
"""

from __future__ import annotations


class RecovrError(Exception):
    """Base class for all errors raised by this package."""

    code: str = "error"

    def __init__(self, detail: str, code: str | None = None):
        super().__init__(detail)
        if code is not None:
            self.code = code

    @property
    def detail(self) -> str:
        return str(self)


class InputError(RecovrError, ValueError):
    """Invalid user-supplied data or options."""

    code = "validation_error"


class ParseError(InputError):
    code = "parse_error"


class RangeError(InputError):
    code = "range_error"


class AlignmentError(InputError):
    """Collections that must share a common level/tau grid do not."""

    code = "alignment_error"


class InsufficientDataError(InputError):
    code = "insufficient_data"


class EvaluationError(InputError):
    """A requested evaluation has no data to evaluate against."""

    code = "empty_test_set"


class StateError(InputError):
    """An operation is invalid in the current workflow state."""

    code = "conflict"


class NumericalError(RecovrError):
    """Numerical failure (conditioning, convergence, infeasibility)."""

    code = "numerical_error"


class ConditioningError(NumericalError):
    code = "conditioning_error"


class ConvergenceError(NumericalError):
    code = "convergence_error"


class InfeasibleError(NumericalError):
    code = "infeasible"


class RejectionBudgetError(NumericalError):
    """Rejection sampling exhausted its attempt budget."""

    code = "rejection_budget"

    def __init__(self, detail: str, attempts: int, accepted: int):
        super().__init__(detail)
        self.attempts = attempts
        self.accepted = accepted
