"""
Strategy: greedy knot insertion by largest change of the fit.

Every step considers the midpoint of each piece of F inside a current
inter-knot gap, refits the constrained MAP with each candidate inserted, and keeps the
candidate whose fit moves furthest in L2[0, 1]. This is a surrogate for the
MaxMod criterion, which scores candidates differently; CSV metadata and CLI
help label it as such.
"""

import logging

import numpy as np
from numpy.typing import NDArray

from csmooth.core import grid as grids
from csmooth.core import smoother
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

SURROGATE_LABEL = "greedy L2-change surrogate of MaxMod"


def l2_change(old: MapSolution, new: MapSolution, points: NDArray[np.float64]) -> float:
    """||P(new) - P(old)||_{L2[0,1]} by the trapezoid rule on points."""
    diff = smoother.evaluate(new, points) - smoother.evaluate(old, points)
    return float(np.sqrt(np.trapezoid(diff * diff, points)))


def candidate_knots(grid: KnotGrid, max_candidates: int = 0) -> NDArray[np.float64]:
    """
    Midpoints of the pieces of F inside each inter-knot gap, in increasing order.

    On F = [0, 1] these are the gap midpoints. With max_candidates > 0 only the
    candidates of the widest pieces are kept (ties go to the leftmost one).

    Example:
        >>> candidate_knots(grids.equispaced(3)).tolist()
        [0.25, 0.75]
    """
    mids: list[float] = []
    widths: list[float] = []
    for a, b in zip(grid.knots[:-1], grid.knots[1:], strict=True):
        for lo, hi in grid.domain.intervals:
            start, stop = max(a, lo), min(b, hi)
            if stop > start:
                mids.append(0.5 * (start + stop))
                widths.append(stop - start)
    points = np.array(mids, dtype=np.float64)
    if 0 < max_candidates < points.size:
        widest = np.sort(np.argsort(-np.array(widths), kind="stable")[:max_candidates])
        points = points[widest]
    return points


@register_strategy("greedy_maxmod")
class GreedyMaxMod(RefinementStrategy):
    label = SURROGATE_LABEL

    def _step(
        self, current: KnotGrid, fit: MapSolution | None, ctx: RefinementContext
    ) -> RefinementStep:
        if fit is None or not fit.grid.same_knots(current):
            fit = smoother.fit(ctx.kernel, current, ctx.obs, ctx.cs, jitter=ctx.jitter)

        candidates = candidate_knots(current, ctx.max_candidates)
        if candidates.size == 0:
            raise RefinementError(
                f"No gap of the {current.N}-knot grid meets F", "NO_CANDIDATES"
            )

        warm = fit.active_keys
        best: RefinementStep | None = None
        for t in candidates:
            trial_grid = grids.refine(current, float(t))
            trial = smoother.fit(
                ctx.kernel, trial_grid, ctx.obs, ctx.cs, jitter=ctx.jitter, warm_keys=warm
            )
            score = l2_change(fit, trial, ctx.l2_points)
            # strict comparison keeps the lowest-index candidate on ties
            if best is None or score > (best.score or 0.0):
                best = RefinementStep(trial_grid, trial, score)

        assert best is not None
        logger.debug(
            f"greedy_maxmod: N={current.N} -> {best.grid.N}, scored {candidates.size} "
            f"candidates, best L2 change {best.score:.4e}"
        )
        return best
