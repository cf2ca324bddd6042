"""
Unit tests for the dense active-set QP solver.
"""

import numpy as np
import pytest

from csmooth.core import qpsolver
from csmooth.core.qpsolver import (
    QpInfeasibleError,
    QpMaxIterationsError,
    QpProblem,
    QpSolverError,
)
from tests.utils.qp import brute_force_qp, random_feasible_qp


class TestSolve:
    """Tests for solve on small closed-form problems."""

    def test_one_dimensional_active_bound(self) -> None:
        """min x^2 - 4x s.t. x <= 1 gives x = 1 with multiplier 2."""
        solution = qpsolver.solve(QpProblem(2 * np.eye(1), np.array([-4.0]), np.eye(1), np.ones(1)))
        assert solution.x[0] == pytest.approx(1.0)
        assert solution.duals[0] == pytest.approx(2.0)
        assert solution.active_set == (0,)

    def test_unconstrained(self) -> None:
        """With no rows x = -H^{-1} g."""
        problem = QpProblem(2 * np.eye(2), np.array([-2.0, -4.0]), np.zeros((0, 2)), np.zeros(0))
        solution = qpsolver.solve(problem)
        np.testing.assert_allclose(solution.x, [1.0, 2.0])
        assert solution.iterations == 0
        assert solution.kkt_residual <= 1e-12

    def test_inactive_constraints(self) -> None:
        problem = QpProblem(2 * np.eye(2), np.array([-2.0, -4.0]), np.eye(2), np.array([5.0, 5.0]))
        solution = qpsolver.solve(problem)
        np.testing.assert_allclose(solution.x, [1.0, 2.0])
        assert solution.active_set == ()

    def test_infeasible_system(self) -> None:
        """x <= -1 and -x <= -1 cannot both hold."""
        problem = QpProblem(np.eye(1), np.zeros(1), np.array([[1.0], [-1.0]]), np.array([-1.0, -1.0]))
        with pytest.raises(QpInfeasibleError) as exc_info:
            qpsolver.solve(problem)
        assert exc_info.value.error_code == "CONDITION_2"
        assert exc_info.value.max_violation > 0
        assert exc_info.value.witness.shape == (1,)

    def test_not_convex(self) -> None:
        problem = QpProblem(-np.eye(2), np.zeros(2), np.eye(2), np.ones(2))
        with pytest.raises(QpSolverError) as exc_info:
            qpsolver.solve(problem)
        assert exc_info.value.error_code == "NOT_CONVEX"

    def test_shape_mismatch(self) -> None:
        with pytest.raises(QpSolverError) as exc_info:
            QpProblem(np.eye(2), np.zeros(2), np.eye(3), np.ones(3))
        assert exc_info.value.error_code == "INVALID_PROBLEM"

    def test_max_iterations(self) -> None:
        """One iteration only reaches the first blocking bound."""
        problem = QpProblem(
            np.eye(2), -np.array([10.0, 10.0]), np.eye(2), np.ones(2), x0=np.zeros(2)
        )
        with pytest.raises(QpMaxIterationsError) as exc_info:
            qpsolver.solve(problem, max_iterations=1)
        error = exc_info.value
        assert error.error_code == "MAX_ITERATIONS"
        assert error.iterations == 1
        np.testing.assert_allclose(error.best_x, [1.0, 1.0])

    def test_infeasible_start_runs_phase_one(self, rng: np.random.Generator) -> None:
        base = random_feasible_qp(rng, 4, 6)
        problem = QpProblem(H=base.H, g=base.g, A=base.A, b=base.b, x0=np.full(4, 1e3))
        solution = qpsolver.solve(problem)
        np.testing.assert_allclose(solution.x, brute_force_qp(base), atol=1e-6)


class TestOracle:
    """Random instances checked against active-set enumeration."""

    def test_matches_brute_force(self, rng: np.random.Generator) -> None:
        """200 random strictly convex instances with n <= 10 and m <= 12."""
        for _ in range(200):
            n = int(rng.integers(1, 11))
            m = int(rng.integers(1, 13))
            problem = random_feasible_qp(rng, n, m)
            solution = qpsolver.solve(problem)
            oracle = brute_force_qp(problem)
            assert np.max(np.abs(solution.x - oracle)) <= 1e-6
            assert solution.objective <= problem.objective(oracle) + 1e-8
            assert solution.kkt_residual <= 1e-8
            assert np.all(solution.duals >= 0)

    def test_objective_trace_nonincreasing(self, rng: np.random.Generator) -> None:
        for _ in range(20):
            problem = random_feasible_qp(rng, 6, 10)
            trace = np.array(qpsolver.solve(problem).trace)
            assert np.all(np.diff(trace) <= 1e-9 * (1.0 + np.abs(trace[:-1])))

    def test_bit_identical_repeats(self, rng: np.random.Generator) -> None:
        problem = random_feasible_qp(rng, 8, 12)
        first, second = qpsolver.solve(problem), qpsolver.solve(problem)
        np.testing.assert_array_equal(first.x, second.x)
        np.testing.assert_array_equal(first.duals, second.duals)
        assert first.active_set == second.active_set

    def test_warm_start_reaches_same_point(self, rng: np.random.Generator) -> None:
        problem = random_feasible_qp(rng, 6, 10)
        cold = qpsolver.solve(problem)
        warm_problem = QpProblem(
            H=problem.H, g=problem.g, A=problem.A, b=problem.b, x0=cold.x, warm_start=cold.active_set
        )
        warm = qpsolver.solve(warm_problem)
        np.testing.assert_allclose(warm.x, cold.x, atol=1e-9)
        assert warm.iterations <= 2


class TestKktResidual:
    """Tests for kkt_residual."""

    def test_zero_at_optimum(self) -> None:
        problem = QpProblem(2 * np.eye(1), np.array([-4.0]), np.eye(1), np.ones(1))
        assert qpsolver.kkt_residual(problem, np.array([1.0]), np.array([2.0])) == 0.0

    def test_detects_negative_dual(self) -> None:
        problem = QpProblem(2 * np.eye(1), np.array([-4.0]), np.eye(1), np.ones(1))
        assert qpsolver.kkt_residual(problem, np.array([1.0]), np.array([-0.5])) >= 0.5

    def test_detects_primal_violation(self) -> None:
        problem = QpProblem(2 * np.eye(1), np.array([-4.0]), np.eye(1), np.ones(1))
        assert qpsolver.kkt_residual(problem, np.array([2.0]), np.array([0.0])) >= 1.0

    def test_stationarity_is_relative_to_g(self) -> None:
        """A large H |x| does not shrink the stationarity residual."""
        problem = QpProblem(np.array([[2.0**20]]), np.zeros(1), np.zeros((0, 1)), np.zeros(0))
        assert qpsolver.kkt_residual(problem, np.array([2.0**-20]), np.zeros(0)) == 1.0

    def test_matches_componentwise_formula(self, rng: np.random.Generator) -> None:
        for _ in range(20):
            problem = random_feasible_qp(rng, 5, 8)
            x, duals = rng.standard_normal(5), rng.standard_normal(8)
            slack = problem.A @ x - problem.b
            gradient = problem.H @ x + problem.g + problem.A.T @ duals
            expected = max(
                np.max(np.abs(gradient)) / (1.0 + np.max(np.abs(problem.g))),
                max(np.max(slack), 0.0),
                max(np.max(-duals), 0.0),
                np.max(np.abs(duals * slack)),
            )
            assert qpsolver.kkt_residual(problem, x, duals) == pytest.approx(expected, rel=1e-12)


def bounded_increasing_qp(H: np.ndarray, g: np.ndarray) -> QpProblem:
    """0 <= x_1 <= x_2 <= ... <= x_n <= 1, rows ordered lower, upper, then order."""
    n = g.size
    eye = np.eye(n)
    order = eye[:-1] - eye[1:]
    A = np.vstack([-eye, eye, order])
    b = np.concatenate([np.zeros(n), np.ones(n), np.zeros(n - 1)])
    return QpProblem(H=H, g=g, A=A, b=b, x0=np.zeros(n))


class TestDegenerateVertices:
    """Starts where more rows are active than there are variables."""

    def test_matches_brute_force_from_origin(self, rng: np.random.Generator) -> None:
        for _ in range(30):
            M = rng.standard_normal((4, 4))
            problem = bounded_increasing_qp(M @ M.T + 0.1 * np.eye(4), 3.0 * rng.standard_normal(4))
            solution = qpsolver.solve(problem)
            np.testing.assert_allclose(solution.x, brute_force_qp(problem), atol=1e-6)
            assert solution.kkt_residual <= 1e-8

    def test_decreasing_target_pins_constant(self) -> None:
        """Data pulling downwards against x_1 <= ... <= x_n gives a constant fit."""
        n = 6
        problem = bounded_increasing_qp(2.0 * np.eye(n), -2.0 * np.linspace(0.9, 0.1, n))
        solution = qpsolver.solve(problem)
        np.testing.assert_allclose(solution.x, np.full(n, 0.5), atol=1e-10)
        assert solution.kkt_residual <= 1e-8

    def test_ill_conditioned_hessian(self) -> None:
        """Inverse Gram matrix of a smooth kernel on 40 knots, cond(H) near 1e8."""
        t = np.linspace(0.0, 1.0, 40)
        r = np.sqrt(5.0) * np.abs(t[:, None] - t[None, :]) / 0.4
        gram = (1.0 + r + r**2 / 3.0) * np.exp(-r)
        design = np.eye(40)[::4]
        H = 2.0 * (np.linalg.inv(gram) + design.T @ design / 0.05)
        H = 0.5 * (H + H.T)
        y = np.array([0.2, 0.1, 0.3, 0.25, 0.6, 0.5, 0.8, 0.7, 1.1, 0.95])
        solution = qpsolver.solve(bounded_increasing_qp(H, -2.0 * design.T @ y / 0.05))
        assert np.all(np.diff(solution.x) >= -1e-10)
        assert solution.x.min() >= -1e-10
        assert solution.x.max() <= 1.0 + 1e-10
        assert np.all(solution.duals >= 0.0)
