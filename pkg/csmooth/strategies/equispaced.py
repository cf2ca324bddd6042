"""
Strategy: equispaced grids.

Each step returns the equispaced grid with one more knot. Successive grids
are not nested, so this strategy serves bound sweeps only.
"""

import logging

from csmooth.core import grid as grids
from csmooth.core.grid import KnotGrid
from csmooth.core.smoother import MapSolution
from csmooth.strategies.base import (
    RefinementContext,
    RefinementError,
    RefinementStep,
    RefinementStrategy,
    register_strategy,
)

logger = logging.getLogger(__name__)


@register_strategy("equispaced")
class Equispaced(RefinementStrategy):
    nested = False

    def initial_grid(self, ctx: RefinementContext) -> KnotGrid:
        if not self.domain.is_dense:
            raise RefinementError(
                "equispaced refinement needs F = [0, 1]; use rejection_interval for a "
                "non-dense domain",
                "INVALID_STRATEGY",
            )
        return grids.equispaced(self.N0, self.domain)

    def _step(
        self, current: KnotGrid, fit: MapSolution | None, ctx: RefinementContext
    ) -> RefinementStep:
        return RefinementStep(grids.equispaced(current.N + 1, self.domain))
