"""
Base utilities for knot-refinement strategies - shared context and registry.

This module provides:
- RefinementContext, the data every strategy needs to score or place knots
- The RefinementStrategy interface (initial grid + one refinement step)
- A strategy registry for lookup by configuration name
"""

import logging
from abc import ABC, abstractmethod
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from csmooth.core.grid import DomainF, KnotGrid
from csmooth.core.smoother import MapSolution, Observations
from csmooth.models import ConstraintSet, Kernel

logger = logging.getLogger(__name__)


class RefinementError(Exception):
    """Base exception for refinement errors."""

    def __init__(self, message: str, error_code: str | None = None):
        self.message = message
        self.error_code = error_code
        super().__init__(self.message)


class RefinementBudgetError(RefinementError):
    def __init__(self, message: str):
        super().__init__(message, error_code="BUDGET_EXHAUSTED")


@dataclass(eq=False)
class RefinementContext:
    """Problem data for one replicate's refinement loop."""

    kernel: Kernel
    obs: Observations
    cs: ConstraintSet | None
    jitter: bool = False
    max_candidates: int = 24
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))
    # L2 change is integrated over [0, 1] on these points
    l2_points: NDArray[np.float64] = field(default_factory=lambda: np.linspace(0.0, 1.0, 2001))


@dataclass(frozen=True, eq=False)
class RefinementStep:
    grid: KnotGrid
    # Set when the strategy already fitted the new grid
    fit: MapSolution | None = None
    score: float | None = None


class RefinementStrategy(ABC):
    """Produces a sequence of grids N0, N0 + 1, ..., Nmax."""

    name: str = ""
    # Extra provenance written into report labels and CSV metadata
    label: str = ""
    nested: bool = True

    def __init__(self, N0: int = 2, Nmax: int = 250, domain: DomainF | None = None):
        if N0 < 2:
            raise RefinementError(f"N0 must be >= 2, got {N0}", "INVALID_STRATEGY")
        if Nmax < N0:
            raise RefinementError(f"Nmax ({Nmax}) must be >= N0 ({N0})", "INVALID_STRATEGY")
        self.N0 = N0
        self.Nmax = Nmax
        self.domain = domain or DomainF()

    def initial_grid(self, ctx: RefinementContext) -> KnotGrid:
        """The N0-knot starting grid: {0, 1} plus further knots from refine steps."""
        current = KnotGrid(np.array([0.0, 1.0]), self.domain)
        while current.N < self.N0:
            current = self._step(current, None, ctx).grid
        return current

    def refine_step(
        self, current: KnotGrid, fit: MapSolution | None, ctx: RefinementContext
    ) -> RefinementStep:
        """
        Grid with one more knot.

        Raises:
            RefinementBudgetError: If current already has Nmax knots
        """
        if current.N >= self.Nmax:
            raise RefinementBudgetError(
                f"{self.name}: budget of {self.Nmax} knots exhausted"
            )
        return self._step(current, fit, ctx)

    @abstractmethod
    def _step(
        self, current: KnotGrid, fit: MapSolution | None, ctx: RefinementContext
    ) -> RefinementStep: ...


# =============================================================================
# Strategy Registry
# =============================================================================
# Strategies register themselves on import, allowing lookup by config name

_strategy_registry: dict[str, type[RefinementStrategy]] = {}


def register_strategy(
    name: str,
) -> Callable[[type[RefinementStrategy]], type[RefinementStrategy]]:
    """
    Class decorator registering a strategy under a configuration name.

    Example:
        @register_strategy("equispaced")
        class Equispaced(RefinementStrategy):
            ...
    """

    def decorator(cls: type[RefinementStrategy]) -> type[RefinementStrategy]:
        cls.name = name
        if name not in _strategy_registry:
            _strategy_registry[name] = cls
            logger.debug(f"Registered strategy: {name}")
        return cls

    return decorator


def get_strategy(name: str) -> type[RefinementStrategy]:
    """
    Strategy class registered under name.

    Raises:
        RefinementError: If no strategy has that name
    """
    try:
        return _strategy_registry[name]
    except KeyError:
        known = ", ".join(sorted(_strategy_registry))
        raise RefinementError(f"Unknown strategy '{name}' (known: {known})", "UNKNOWN_STRATEGY")


def get_all_strategies() -> list[str]:
    return sorted(_strategy_registry)

