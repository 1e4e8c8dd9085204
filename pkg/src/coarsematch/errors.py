"""Exception types shared across the package."""

from __future__ import annotations


class ValidationError(ValueError):
    """An instance, clustering, or plan violates a structural invariant."""


class InvalidCapacityError(ValueError):
    """A requested minimum cluster size cannot be satisfied."""


class PlanInconsistencyError(ValueError):
    """A dispatch plan does not fit the instance or clustering it is run against."""


class UndefinedMetricError(ValueError):
    """A metric has no defined value for the given inputs (e.g. zero denominator)."""


class SolverLimitError(RuntimeError):
    """LP solver hit its iteration limit; carries the best bound found so far."""

    def __init__(self, message: str, best_objective: float, gap: float):
        super().__init__(message)
        self.best_objective = best_objective
        self.gap = gap
