"""
Unit tests for domains, knot grids, hat functions and the multi-affine extension.
"""

from pathlib import Path

import numpy as np
import pytest

from csmooth.core import grid as grids
from csmooth.core.grid import DomainF, GridError, KnotGrid, PiecewiseLinear


class TestDomainF:
    """Tests for DomainF."""

    def test_default_is_dense(self) -> None:
        assert DomainF().is_dense
        assert DomainF().holes == []

    def test_holes_and_membership(self, non_dense: DomainF) -> None:
        """F = [0, 0.3] U [0.6, 1] has one hole (0.3, 0.6)."""
        assert not non_dense.is_dense
        assert non_dense.holes == [(0.3, 0.6)]
        np.testing.assert_array_equal(
            non_dense.contains([0.0, 0.3, 0.45, 0.6, 1.0]), [True, True, False, True, True]
        )

    @pytest.mark.parametrize(
        "pairs",
        [
            [[0.1, 1.0]],
            [[0.0, 0.9]],
            [[0.0, 0.5], [0.4, 1.0]],
            [[0.0, 0.6], [0.5, 0.4], [0.7, 1.0]],
        ],
    )
    def test_invalid_domains(self, pairs: list[list[float]]) -> None:
        """Intervals must be sorted, disjoint and cover 0 and 1."""
        with pytest.raises(GridError) as exc_info:
            DomainF.from_pairs(pairs)
        assert exc_info.value.error_code == "INVALID_DOMAIN"


class TestKnotGrid:
    """Tests for KnotGrid construction and refinement."""

    def test_equispaced_three(self) -> None:
        """Equispaced N = 3 is {0, 0.5, 1}."""
        np.testing.assert_array_equal(grids.equispaced(3).knots, [0.0, 0.5, 1.0])

    def test_equispaced_needs_two_knots(self) -> None:
        with pytest.raises(GridError):
            grids.equispaced(1)

    @pytest.mark.parametrize(
        "knots", [[0.0, 0.5, 0.5, 1.0], [0.0, 0.7, 0.5, 1.0], [0.1, 1.0], [0.0, 0.9], [0.0]]
    )
    def test_invalid_knots(self, knots: list[float]) -> None:
        """Knots start at 0, end at 1 and strictly increase."""
        with pytest.raises(GridError) as exc_info:
            KnotGrid(np.array(knots))
        assert exc_info.value.error_code == "INVALID_KNOTS"

    def test_knots_must_lie_in_domain(self, non_dense: DomainF) -> None:
        with pytest.raises(GridError):
            KnotGrid(np.array([0.0, 0.45, 1.0]), non_dense)

    def test_knots_are_copied_and_frozen(self) -> None:
        """The grid owns a read-only copy of the caller's array."""
        source = np.array([0.0, 0.5, 1.0])
        grid = KnotGrid(source)
        source[1] = 0.25
        assert grid.knots[1] == 0.5
        with pytest.raises(ValueError):
            grid.knots[1] = 0.3

    def test_refine_keeps_parent(self) -> None:
        """refine inserts in order and records the parent."""
        parent = grids.equispaced(3)
        child = grids.refine(parent, 0.25)
        np.testing.assert_array_equal(child.knots, [0.0, 0.25, 0.5, 1.0])
        assert child.parent is parent

    @pytest.mark.parametrize("t", [0.5, 0.0, 1.0, 1.2])
    def test_refine_rejects_existing_or_outside(self, t: float) -> None:
        with pytest.raises(GridError):
            grids.refine(grids.equispaced(3), t)

    def test_equispaced_in_non_dense(self, non_dense: DomainF) -> None:
        """Reference grids of non-dense F keep only points of F plus interval ends."""
        grid = grids.equispaced_in(non_dense, 101)
        assert np.all(non_dense.contains(grid.knots))
        for end in (0.0, 0.3, 0.6, 1.0):
            assert end in grid.knots
        assert np.min(np.diff(grid.knots)) > 0.002

    def test_equispaced_in_dense_matches_equispaced(self) -> None:
        np.testing.assert_allclose(
            grids.equispaced_in(DomainF(), 11).knots, grids.equispaced(11).knots
        )


class TestHatFunctions:
    """Tests for hat_eval, hat_matrix and neighbors."""

    def test_hat_value(self) -> None:
        """phi_2 of {0, 0.5, 1} at 0.25 is 1/2."""
        assert grids.hat_eval(grids.equispaced(3), 1, 0.25) == 0.5

    def test_hat_is_one_at_its_knot(self) -> None:
        grid = grids.equispaced(5)
        for i, t in enumerate(grid.knots):
            assert grids.hat_eval(grid, i, float(t)) == 1.0

    def test_partition_of_unity(self, rng: np.random.Generator) -> None:
        """Hat rows have at most two nonzeros and sum to 1."""
        grid = KnotGrid(np.concatenate([[0.0], np.sort(rng.random(8)), [1.0]]))
        M = grids.hat_matrix(grid, rng.random(200))
        np.testing.assert_allclose(M.sum(axis=1), 1.0)
        assert np.all((M > 0).sum(axis=1) <= 2)

    def test_hat_matrix_agrees_with_hat_eval(self, rng: np.random.Generator) -> None:
        grid = grids.equispaced(6)
        ts = rng.random(25)
        M = grids.hat_matrix(grid, ts)
        for row, t in zip(M, ts, strict=True):
            expected = [grids.hat_eval(grid, i, float(t)) for i in range(grid.N)]
            np.testing.assert_allclose(row, expected, atol=1e-14)

    def test_hat_index_out_of_range(self) -> None:
        with pytest.raises(GridError):
            grids.hat_eval(grids.equispaced(3), 3, 0.5)

    def test_neighbors(self) -> None:
        grid = grids.equispaced(5)
        assert grids.neighbors(grid, 0.3) == pytest.approx((0.25, 0.5, 0.8, 0.2))
        assert grids.neighbors(grid, 0.5) == (0.5, 0.5, 0.5, 0.5)


class TestProjectionAndExtension:
    """Tests for project_pi_N, extend_P and extension_matrix."""

    def test_projection_interpolates(self) -> None:
        grid = grids.equispaced(5)
        projected = grids.project_pi_N(grid, np.sin)
        np.testing.assert_allclose(projected(grid.knots), np.sin(grid.knots))
        mid = 0.5 * (grid.knots[1] + grid.knots[2])
        assert float(projected(np.array([mid]))[0]) == pytest.approx(
            0.5 * (np.sin(grid.knots[1]) + np.sin(grid.knots[2]))
        )

    def test_extension_bridges_holes(self, non_dense: DomainF) -> None:
        """Inside a hole the extension is affine between the hole ends."""
        value = grids.extend_P(non_dense, np.sin, [0.45, 0.2, 0.8])
        assert value[0] == pytest.approx(0.5 * (np.sin(0.3) + np.sin(0.6)))
        np.testing.assert_allclose(value[1:], np.sin([0.2, 0.8]))

    def test_extension_of_piecewise_linear(self, non_dense: DomainF, rng: np.random.Generator) -> None:
        """For knots in F, P(u) is the hat interpolant itself."""
        grid = KnotGrid(np.array([0.0, 0.1, 0.3, 0.6, 0.75, 1.0]), non_dense)
        u = PiecewiseLinear(grid, rng.standard_normal(grid.N))
        ts = np.linspace(0.0, 1.0, 57)
        np.testing.assert_allclose(grids.extend_P(non_dense, u, ts), u(ts), atol=1e-14)
        np.testing.assert_allclose(grids.extension_matrix(grid, ts) @ u.coeffs, u(ts), atol=1e-14)

    def test_extension_matrix_rows_sum_to_one(self, non_dense: DomainF) -> None:
        grid = KnotGrid(np.array([0.0, 0.2, 0.3, 0.7, 1.0]), non_dense)
        M = grids.extension_matrix(grid, np.linspace(0.0, 1.0, 41))
        np.testing.assert_allclose(M.sum(axis=1), 1.0)

    def test_extension_matrix_dense_equals_hats(self, grid10: KnotGrid) -> None:
        ts = np.linspace(0.0, 1.0, 33)
        np.testing.assert_array_equal(grids.extension_matrix(grid10, ts), grids.hat_matrix(grid10, ts))


class TestGridSize:
    """Tests for grid_size_delta."""

    @pytest.mark.parametrize("n,delta", [(2, 0.5), (3, 0.25), (5, 0.125)])
    def test_equispaced(self, n: int, delta: float) -> None:
        """delta_N of equispaced knots is half the spacing."""
        assert grids.grid_size_delta(grids.equispaced(n)) == pytest.approx(delta)

    def test_non_uniform(self) -> None:
        grid = KnotGrid(np.array([0.0, 0.1, 0.7, 1.0]))
        assert grids.grid_size_delta(grid) == pytest.approx(0.3)

    def test_non_dense_with_interval_ends(self, non_dense: DomainF) -> None:
        """Knots at every interval end: half the widest gap inside F."""
        grid = KnotGrid(np.array([0.0, 0.3, 0.6, 1.0]), non_dense)
        assert grids.grid_size_delta(grid) == pytest.approx(0.2)

    def test_non_dense_without_inner_knots(self, non_dense: DomainF) -> None:
        """With knots {0, 1}, t = 0.6 is 0.4 from its nearest knot."""
        grid = KnotGrid(np.array([0.0, 1.0]), non_dense)
        assert grids.grid_size_delta(grid) == pytest.approx(0.4)

    def test_interval_without_knots(self) -> None:
        """A knotless piece of F is measured from the knots on either side of it."""
        domain = DomainF.from_pairs([[0.0, 0.3], [0.5, 0.6], [0.8, 1.0]])
        grid = KnotGrid(np.array([0.0, 1.0]), domain)
        assert grids.grid_size_delta(grid) == pytest.approx(0.5)

    def test_non_dense_stagnates(self, non_dense: DomainF) -> None:
        """Knots packed into F leave delta_N bounded below by the hole geometry."""
        knots = np.concatenate([np.linspace(0.0, 0.25, 20), np.linspace(0.65, 1.0, 20)])
        grid = KnotGrid(knots, non_dense)
        assert grids.grid_size_delta(grid) == pytest.approx(0.05)

    def test_nonincreasing_under_refinement(self, rng: np.random.Generator) -> None:
        grid = grids.equispaced(2)
        last = grids.grid_size_delta(grid)
        for t in rng.random(30):
            if t in grid.knots:
                continue
            grid = grids.refine(grid, float(t))
            current = grids.grid_size_delta(grid)
            assert current <= last
            last = current


class TestAuditAndSerialization:
    """Tests for audit_points and the CSV format."""

    def test_audit_points(self, non_dense: DomainF) -> None:
        grid = KnotGrid(np.array([0.0, 0.1234, 0.3, 0.6, 1.0]), non_dense)
        audit = grids.audit_points(non_dense, grid)
        assert 0.1234 in audit
        assert np.all(np.diff(audit) > 0)
        assert np.all(non_dense.contains(audit))
        assert audit.size == 2 * 2001 + 1

    def test_csv_round_trip(self, non_dense: DomainF, tmp_path: Path) -> None:
        grid = KnotGrid(np.array([0.0, 0.1 / 3.0, 0.3, 0.6, 1.0]), non_dense)
        path = tmp_path / "grid.csv"
        grids.to_csv(grid, path)
        loaded = grids.from_csv(path)
        assert loaded.same_knots(grid)
        assert loaded.domain == non_dense

    def test_csv_without_header(self, tmp_path: Path) -> None:
        path = tmp_path / "grid.csv"
        path.write_text("knot\n0\n1\n")
        with pytest.raises(GridError):
            grids.from_csv(path)
