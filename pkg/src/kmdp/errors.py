"""Exception types shared across the package."""

from __future__ import annotations


class KmdpError(Exception):
    """Base class for all package errors."""


class ModelFormatError(KmdpError):
    """A model or policy document is structurally malformed (bad JSON shape,
    wrong types, unknown keys). Distinct from ValidationError, which covers
    well-formed documents that violate a model invariant."""


class ValidationError(KmdpError):
    """One or more model/policy invariants are violated.

    Carries the full ordered violation list; the message shows the first.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        first = str(self.violations[0]) if self.violations else "invalid"
        extra = len(self.violations) - 1
        suffix = f" (+{extra} more)" if extra > 0 else ""
        super().__init__(first + suffix)


class HorizonError(KmdpError):
    """The operation would leave no decision epoch (single-epoch model)."""


class StageError(KmdpError):
    """A stage argument falls outside the range the operation accepts."""


class ExplosionError(KmdpError):
    """An exhaustive enumeration exceeded its configured cap."""


class MissingBranchError(KmdpError):
    """A combined policy was queried from an initial state with no branch."""


class InconsistentOutcomeError(KmdpError):
    """An outcome does not fit the model it is being assessed against."""


class InternalError(KmdpError):
    """An internal invariant failed; indicates a bug or numerical fault."""
