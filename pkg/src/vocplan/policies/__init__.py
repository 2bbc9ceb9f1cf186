from .planner import (
    POLICY_KINDS,
    MetaPolicyConfig,
    PlanDiagnostics,
    bayes_uct_select,
    plan,
    voi_policy_choose,
)
from .uct import ThompsonTree, UctTree, thompson_select, uct_select

__all__ = [
    "POLICY_KINDS",
    "MetaPolicyConfig",
    "PlanDiagnostics",
    "bayes_uct_select",
    "plan",
    "voi_policy_choose",
    "ThompsonTree",
    "UctTree",
    "thompson_select",
    "uct_select",
]
