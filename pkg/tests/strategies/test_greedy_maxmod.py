"""
Unit tests for greedy knot insertion by largest L2 change.
"""

import numpy as np
import pytest

from csmooth.core import grid as grids
from csmooth.core import smoother
from csmooth.core.grid import DomainF, KnotGrid
from csmooth.strategies import RefinementContext
from csmooth.strategies.greedy_maxmod import GreedyMaxMod, candidate_knots, l2_change


class TestCandidateKnots:
    """Tests for candidate_knots."""

    def test_gap_midpoints(self) -> None:
        np.testing.assert_allclose(candidate_knots(grids.equispaced(3)), [0.25, 0.75])

    def test_pieces_of_non_dense_domain(self, non_dense: DomainF) -> None:
        """A gap spanning a hole offers the midpoint of each piece of F inside it."""
        grid = KnotGrid(np.array([0.0, 1.0]), non_dense)
        np.testing.assert_allclose(candidate_knots(grid), [0.15, 0.8])

    def test_gap_equal_to_hole_is_skipped(self, non_dense: DomainF) -> None:
        grid = KnotGrid(np.array([0.0, 0.3, 0.6, 1.0]), non_dense)
        np.testing.assert_allclose(candidate_knots(grid), [0.15, 0.8])

    def test_widest_kept_in_position_order(self) -> None:
        grid = KnotGrid(np.array([0.0, 0.1, 0.5, 1.0]), DomainF())
        np.testing.assert_allclose(candidate_knots(grid, max_candidates=2), [0.3, 0.75])

    def test_zero_keeps_all(self, grid10: KnotGrid) -> None:
        assert candidate_knots(grid10, max_candidates=0).size == 9


class TestGreedyMaxMod:
    """Tests for GreedyMaxMod."""

    def test_l2_change_of_identical_fits(self, refinement_context: RefinementContext, grid10: KnotGrid) -> None:
        ctx = refinement_context
        fit = smoother.fit(ctx.kernel, grid10, ctx.obs, ctx.cs, jitter=True)
        assert l2_change(fit, fit, ctx.l2_points) == 0.0

    def test_picks_largest_change(self, refinement_context: RefinementContext) -> None:
        ctx = refinement_context
        current = grids.equispaced(6)
        fit = smoother.fit(ctx.kernel, current, ctx.obs, ctx.cs, jitter=True)
        step = GreedyMaxMod(Nmax=20).refine_step(current, fit, ctx)

        scores = []
        for t in candidate_knots(current, ctx.max_candidates):
            trial = smoother.fit(ctx.kernel, grids.refine(current, float(t)), ctx.obs, ctx.cs, jitter=True)
            scores.append(l2_change(fit, trial, ctx.l2_points))
        assert step.score == pytest.approx(max(scores), rel=1e-6)
        assert step.grid.N == 7
        assert step.fit is not None
        assert step.fit.grid.same_knots(step.grid)

    def test_fits_when_no_fit_given(self, refinement_context: RefinementContext) -> None:
        step = GreedyMaxMod(Nmax=20).refine_step(grids.equispaced(4), None, refinement_context)
        assert step.grid.N == 5
        assert step.score is not None and step.score >= 0.0

    def test_nested_sequence(self, refinement_context: RefinementContext) -> None:
        strategy = GreedyMaxMod(N0=2, Nmax=6)
        grid = strategy.initial_grid(refinement_context)
        fit = None
        while grid.N < 6:
            step = strategy.refine_step(grid, fit, refinement_context)
            assert set(grid.knots) <= set(step.grid.knots)
            grid, fit = step.grid, step.fit
        assert grid.N == 6

    def test_non_dense_domain(self, refinement_context: RefinementContext, non_dense: DomainF) -> None:
        """Starting from {0, 1} the inserted knots stay inside F."""
        grid = GreedyMaxMod(N0=5, Nmax=10, domain=non_dense).initial_grid(refinement_context)
        assert grid.N == 5
        assert np.all(non_dense.contains(grid.knots))
