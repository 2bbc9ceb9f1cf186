"""Exception types shared across the planning library."""


class PlanningError(Exception):
    """Base class for planner-specific failures."""


class DegenerateBeliefError(PlanningError):
    """Raised when a belief update divides by a non-positive scale."""


class UnsupportedStructureError(PlanningError):
    """Raised when an operation needs a deterministic search tree but got a DAG."""


class EmptyFrontierError(PlanningError):
    """Raised when an expansion produces no sampleable frontier."""
