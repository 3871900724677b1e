"""Exception types shared across the toolkit.

Every error carries a short machine-readable ``code`` and a ``context`` dict
so the CLI can emit structured JSON on stderr.
"""

from __future__ import annotations


class EvMarketError(Exception):
    """Base class for all toolkit errors."""

    code = "error"

    def __init__(self, message: str, **context):
        super().__init__(message)
        self.message = message
        self.context = context

    def to_json_dict(self) -> dict:
        return {"code": self.code, "message": self.message, "context": self.context}


class SchemaError(EvMarketError):
    """CSV header does not match the expected panel schema."""

    code = "schema"


class ValidationError(EvMarketError):
    """Input rows or arrays violate a documented invariant."""

    code = "validation"


class DuplicateKeyError(EvMarketError):
    """A (zip, year) pair appears more than once."""

    code = "duplicate-key"


class LagUnavailableError(EvMarketError):
    """A lagged value is required but the predecessor year is absent."""

    code = "lag-unavailable"


class EmptyDerivationError(EvMarketError):
    """No record in the panel has defined lags."""

    code = "empty-derivation"


class PipelineOrderError(EvMarketError):
    """An operation needs derived fields that have not been computed."""

    code = "pipeline-order"


class SingularDesignError(EvMarketError):
    """Regressor matrix is rank deficient; names the dependent columns."""

    code = "singular-design"


class ConditioningError(EvMarketError):
    """A weight or moment matrix is numerically non-invertible."""

    code = "ill-conditioned"


class NonConvergenceError(EvMarketError):
    """Iterative solver exhausted its budget; carries the final residual."""

    code = "non-convergence"


class DomainError(EvMarketError):
    """An argument lies outside its mathematical domain."""

    code = "domain"


class SpecificationMismatchError(EvMarketError):
    """A coefficient set lacks names required by the simulation step."""

    code = "spec-mismatch"


class ScenarioInfeasibleError(EvMarketError):
    """A policy adjustment drives a quantity out of its feasible range."""

    code = "scenario-infeasible"


class AlignmentError(EvMarketError):
    """Trajectories or paths do not share a common horizon."""

    code = "alignment"
