"""
Strategy: random knots restricted to a non-dense domain.

Candidate knots are drawn from Uniform(0, 1) and rejected until one lands in
the strategy's domain and is not already a knot. On F = [0, 1] this is plain
random refinement.
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

MAX_DRAWS = 100_000


@register_strategy("rejection_interval")
class RejectionInterval(RefinementStrategy):
    def _step(
        self, current: KnotGrid, fit: MapSolution | None, ctx: RefinementContext
    ) -> RefinementStep:
        for attempt in range(1, MAX_DRAWS + 1):
            t = float(ctx.rng.random())
            if t <= 0.0 or not bool(self.domain.contains(t)) or t in current.knots:
                continue
            logger.debug(f"rejection_interval: accepted t={t:.6f} after {attempt} draws")
            return RefinementStep(grids.refine(current, t))
        raise RefinementError(
            f"No admissible knot after {MAX_DRAWS} draws on {self.domain.to_list()}",
            "REJECTION_STALLED",
        )
