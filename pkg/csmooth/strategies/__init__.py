"""
Knot-refinement strategies.

Importing this package registers every strategy; look them up by their
configuration name with get_strategy().
"""

from csmooth.strategies import equispaced, greedy_maxmod, rejection_interval  # noqa: F401
from csmooth.strategies.base import (
    RefinementBudgetError,
    RefinementContext,
    RefinementError,
    RefinementStep,
    RefinementStrategy,
    get_all_strategies,
    get_strategy,
    register_strategy,
)

__all__ = [
    "RefinementBudgetError",
    "RefinementContext",
    "RefinementError",
    "RefinementStep",
    "RefinementStrategy",
    "get_all_strategies",
    "get_strategy",
    "register_strategy",
]
