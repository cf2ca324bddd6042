"""
Dense convex quadratic programming.

Minimizes 1/2 x^T H x + g^T x subject to A x <= b for a symmetric positive
definite H with a primal active-set method:

- With H = L L^T the equality-constrained subproblem on the working set W
  is solved in y = L^T x from a QR factorization of V = L^{-1} A_W^T that is
  updated as rows enter and leave W.
- Ties in the choice of blocking or dropped constraints go to the lowest row
  index, so identical inputs give bit-identical iterates. After a zero-length
  step the lowest-index row with a negative multiplier is dropped (Bland).
- The final iterate is refined on its working set with gradients accumulated
  in extended precision.
- The start is a caller-supplied feasible point when it is feasible, otherwise
  a phase-1 linear program (scipy.optimize.linprog, HiGHS).
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy import linalg, optimize

logger = logging.getLogger(__name__)

PRIMAL_TOL = 1e-10
# a_i^T p must exceed this fraction of ||p|| to block a step
BLOCKING_TOL = 1e-12
INDEPENDENCE_TOL = 1e-10
REFINEMENT_ROUNDS = 2


class QpSolverError(Exception):
    """Base exception for QP solver errors."""

    def __init__(self, message: str, error_code: str | None = None):
        self.message = message
        self.error_code = error_code
        super().__init__(self.message)


class QpInfeasibleError(QpSolverError):
    """The constraint system has no solution (Condition 2 at the call sites)."""

    def __init__(self, message: str, max_violation: float, witness: NDArray[np.float64]):
        super().__init__(message, error_code="CONDITION_2")
        # Smallest achievable max_i (A x - b)_i and a point attaining it
        self.max_violation = max_violation
        self.witness = witness


class QpMaxIterationsError(QpSolverError):
    def __init__(
        self, message: str, best_x: NDArray[np.float64], kkt_residual: float, iterations: int
    ):
        super().__init__(message, error_code="MAX_ITERATIONS")
        self.best_x = best_x
        self.kkt_residual = kkt_residual
        self.iterations = iterations


@dataclass(frozen=True)
class QpProblem:
    """min 1/2 x^T H x + g^T x  s.t.  A x <= b."""

    H: NDArray[np.float64]
    g: NDArray[np.float64]
    A: NDArray[np.float64]
    b: NDArray[np.float64]
    # Optional feasible starting point and warm working set (row indices)
    x0: NDArray[np.float64] | None = None
    warm_start: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        n = self.g.shape[0]
        if self.H.shape != (n, n):
            raise QpSolverError(f"H has shape {self.H.shape}, expected ({n}, {n})", "INVALID_PROBLEM")
        if self.A.ndim != 2 or self.A.shape[1] != n or self.A.shape[0] != self.b.shape[0]:
            raise QpSolverError(
                f"A has shape {self.A.shape}, b has shape {self.b.shape}, n = {n}",
                "INVALID_PROBLEM",
            )

    @property
    def n(self) -> int:
        return int(self.g.shape[0])

    @property
    def m(self) -> int:
        return int(self.b.shape[0])

    def objective(self, x: NDArray[np.float64]) -> float:
        return float(0.5 * x @ self.H @ x + self.g @ x)


@dataclass(frozen=True)
class QpSolution:
    x: NDArray[np.float64]
    duals: NDArray[np.float64]
    kkt_residual: float
    active_set: tuple[int, ...]
    iterations: int
    objective: float
    trace: tuple[float, ...] = field(default=(), repr=False)


def kkt_residual(p: QpProblem, x: NDArray[np.float64], duals: NDArray[np.float64]) -> float:
    """
    Largest of the stationarity, primal, dual and complementarity residuals.

    Stationarity is ||Hx + g + A^T mu||_inf / (1 + ||g||_inf); the others are
    absolute: max(Ax - b)_+, max(-mu)_+ and max |mu_i (Ax - b)_i|.
    """
    grad = p.H @ x + p.g + p.A.T @ duals
    scale = 1.0 + float(np.max(np.abs(p.g), initial=0.0))
    stationarity = float(np.max(np.abs(grad), initial=0.0)) / scale
    slack = p.A @ x - p.b
    primal = float(np.max(slack, initial=0.0))
    dual = float(np.max(-duals, initial=0.0))
    complementarity = float(np.max(np.abs(duals * slack), initial=0.0))
    return max(stationarity, primal, dual, complementarity, 0.0)


def _phase_one(p: QpProblem) -> NDArray[np.float64]:
    """Point maximizing the smallest slack min_i (b - A x)_i, capped at 1."""
    n, m = p.n, p.m
    cost = np.zeros(n + 1)
    cost[-1] = -1.0
    A_ub = np.hstack([p.A, np.ones((m, 1))])
    bounds = [(None, None)] * n + [(None, 1.0)]
    result = optimize.linprog(cost, A_ub=A_ub, b_ub=p.b, bounds=bounds, method="highs")
    if result.status != 0 or result.x is None:
        raise QpSolverError(f"Phase-1 program failed: {result.message}", "PHASE_ONE")
    x = np.asarray(result.x[:n], dtype=np.float64)
    worst = float(np.max(p.A @ x - p.b, initial=0.0))
    if -float(result.x[-1]) > PRIMAL_TOL * (1.0 + float(np.max(np.abs(p.b), initial=0.0))):
        raise QpInfeasibleError(
            f"Constraint system is infeasible: max violation at least {-result.x[-1]:.3e} "
            "(constraint/kernel incompatibility, Condition 2)",
            max_violation=max(worst, -float(result.x[-1])),
            witness=x,
        )
    return x


def _starting_point(p: QpProblem) -> NDArray[np.float64]:
    if p.x0 is not None:
        x0 = np.asarray(p.x0, dtype=np.float64)
        if x0.shape == (p.n,) and float(np.max(p.A @ x0 - p.b, initial=0.0)) <= PRIMAL_TOL:
            return x0.copy()
        logger.debug("Supplied start is infeasible, running phase 1")
    return _phase_one(p)


class _WorkingSet:
    """
    Working set W with a full QR factorization of V = L^{-1} A_W^T.

    Columns of V follow the order of rows; Q[:, |W|:] spans the null space of
    V^T. Rows enter and leave through qr_insert and qr_delete.
    """

    def __init__(self, A: NDArray[np.float64], lower: NDArray[np.float64]):
        self.A = A
        self.lower = lower
        self.rows: list[int] = []
        n = lower.shape[0]
        self.Q = np.eye(n)
        self.R = np.zeros((n, 0))
        self._cache: dict[int, NDArray[np.float64]] = {}

    def column(self, i: int) -> NDArray[np.float64]:
        if i not in self._cache:
            self._cache[i] = linalg.solve_triangular(self.lower, self.A[i], lower=True)
        return self._cache[i]

    def independent(self, i: int) -> bool:
        """True if row i is not (numerically) in the span of the rows in W."""
        v = self.column(i)
        norm = float(np.linalg.norm(v))
        residual = float(np.linalg.norm(self.Q[:, len(self.rows) :].T @ v))
        return norm > 0.0 and residual > INDEPENDENCE_TOL * norm

    def seed(self, candidates: list[int]) -> None:
        """Add the candidates, in order, that are independent of those before them."""
        for i in candidates:
            if self.independent(i):
                self.add(i)

    def add(self, i: int) -> None:
        k = len(self.rows)
        if k == self.Q.shape[0]:
            raise QpSolverError(f"Working set is full, cannot add row {i}", "DEGENERATE")
        v = self.column(i)
        if k == 0:
            self.Q, self.R = linalg.qr(v[:, np.newaxis])
        else:
            self.Q, self.R = linalg.qr_insert(self.Q, self.R, v, k, which="col")
        self.rows.append(i)

    def remove(self, position: int) -> None:
        self.rows.pop(position)
        if not self.rows:
            n = self.Q.shape[0]
            self.Q, self.R = np.eye(n), np.zeros((n, 0))
            return
        self.Q, self.R = linalg.qr_delete(self.Q, self.R, position, 1, which="col")

    def step(
        self, grad: NDArray[np.float64]
    ) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Step p and multipliers mu of the equality subproblem on W."""
        w = linalg.solve_triangular(self.lower, grad, lower=True)
        k = len(self.rows)
        if k == 0:
            mu = np.zeros(0)
            p_y = -w
        else:
            null = self.Q[:, k:]
            p_y = -(null @ (null.T @ w))
            mu = linalg.solve_triangular(self.R[:k, :k], -(self.Q[:, :k].T @ w))
        p = linalg.solve_triangular(self.lower, p_y, lower=True, trans="T")
        return p, mu


def _blocking_row(
    work: _WorkingSet,
    slack: NDArray[np.float64],
    Ap: NDArray[np.float64],
    candidates: NDArray[np.intp],
) -> tuple[float, int]:
    """Smallest ratio slack_i / (a_i^T p) over independent rows, lowest index on ties."""
    ratios = np.maximum(slack[candidates], 0.0) / Ap[candidates]
    # lexsort keys are given last-first: ratio, then row index
    for k in np.lexsort((candidates, ratios)):
        if ratios[k] >= 1.0:
            break
        if work.independent(int(candidates[k])):
            return float(ratios[k]), int(candidates[k])
        logger.debug(f"Skipping row {candidates[k]}: dependent on the working set")
    return 1.0, -1


def solve(
    p: QpProblem, tol: float = 1e-8, max_iterations: int | None = None
) -> QpSolution:
    """
    Solve a strictly convex QP to KKT tolerance tol.

    Args:
        p: The problem; p.x0 and p.warm_start are hints only
        tol: Dual feasibility and KKT tolerance
        max_iterations: Outer iteration cap (default 10 (n + m) + 100)

    Returns:
        QpSolution with primal x, duals mu >= 0, active set and objective trace

    Raises:
        QpSolverError: If H is not positive definite or shapes disagree
        QpInfeasibleError: If {x : A x <= b} is empty
        QpMaxIterationsError: If the iteration cap is reached

    Example:
        >>> sol = solve(QpProblem(2 * np.eye(1), np.array([-4.0]), np.eye(1), np.ones(1)))
        >>> float(sol.x[0]), float(sol.duals[0])
        (1.0, 2.0)
    """
    try:
        lower = linalg.cholesky(p.H, lower=True)
    except linalg.LinAlgError:
        raise QpSolverError("QP Hessian is not positive definite", "NOT_CONVEX")

    if p.m == 0:
        x = -linalg.cho_solve((lower, True), p.g)
        duals = np.zeros(0)
        return QpSolution(
            x=x,
            duals=duals,
            kkt_residual=kkt_residual(p, x, duals),
            active_set=(),
            iterations=0,
            objective=p.objective(x),
            trace=(p.objective(x),),
        )

    x = _starting_point(p)
    work = _WorkingSet(p.A, lower)
    slack = p.b - p.A @ x
    active = [int(i) for i in np.flatnonzero(slack <= PRIMAL_TOL)]
    warm = set(p.warm_start)
    work.seed([i for i in active if i in warm] + [i for i in active if i not in warm])

    limit = max_iterations if max_iterations is not None else 10 * (p.n + p.m) + 100
    trace = [p.objective(x)]
    at_subspace_min = False
    # Anti-cycling: after a zero-length step the dropped row is the lowest-index
    # one with a negative multiplier, and a dropped row cannot block the next step
    degenerate = False
    dropped = -1
    mu = np.zeros(0)
    for iteration in range(1, limit + 1):
        grad = p.H @ x + p.g
        step, mu = work.step(grad)
        step_norm = float(np.linalg.norm(step))
        if at_subspace_min or step_norm <= 1e-14 * (1.0 + float(np.linalg.norm(x))):
            negative = np.flatnonzero(mu < -tol)
            if negative.size == 0:
                return _finish(p, x, work, iteration, trace, tol)
            if degenerate:
                drop = int(min(negative, key=lambda k: work.rows[k]))
            else:
                drop = int(np.argmin(mu))  # first index among equal minima
            dropped = work.rows[drop]
            logger.debug(f"QP iter {iteration}: drop row {dropped} (mu={mu[drop]:.3e})")
            work.remove(drop)
            at_subspace_min = False
            continue

        Ap = p.A @ step
        slack = p.b - p.A @ x
        outside = np.ones(p.m, dtype=bool)
        outside[work.rows] = False
        if dropped >= 0:
            outside[dropped] = False
        candidates = np.flatnonzero(outside & (Ap > BLOCKING_TOL * step_norm))
        alpha, blocking = 1.0, -1
        if candidates.size:
            alpha, blocking = _blocking_row(work, slack, Ap, candidates)

        x = x + alpha * step
        trace.append(p.objective(x))
        degenerate = alpha * step_norm <= 1e-14 * (1.0 + float(np.linalg.norm(x)))
        dropped = -1
        if blocking >= 0:
            logger.debug(f"QP iter {iteration}: add row {blocking} (alpha={alpha:.3e})")
            work.add(blocking)
            at_subspace_min = False
        else:
            at_subspace_min = True

    duals = _full_duals(p, work.rows, mu)
    residual = kkt_residual(p, x, duals)
    raise QpMaxIterationsError(
        f"Active-set QP did not converge in {limit} iterations (KKT residual {residual:.3e})",
        best_x=x,
        kkt_residual=residual,
        iterations=limit,
    )


def _full_duals(p: QpProblem, rows: list[int], mu: NDArray[np.float64]) -> NDArray[np.float64]:
    duals = np.zeros(p.m)
    if rows and mu.size == len(rows):
        duals[rows] = np.maximum(mu, 0.0)
    return duals


def _precise_gradient(p: QpProblem, x: NDArray[np.float64]) -> NDArray[np.float64]:
    """H x + g accumulated in extended precision where the platform has it."""
    wide = p.H.astype(np.longdouble) @ x.astype(np.longdouble) + p.g.astype(np.longdouble)
    return np.asarray(wide, dtype=np.float64)


def _polish(p: QpProblem, x: NDArray[np.float64], work: _WorkingSet) -> NDArray[np.float64]:
    """Iterative refinement of the subproblem minimizer on the final working set."""
    for _ in range(REFINEMENT_ROUNDS):
        step, _ = work.step(_precise_gradient(p, x))
        candidate = x + step
        if float(np.max(p.A @ candidate - p.b, initial=0.0)) > PRIMAL_TOL:
            break
        x = candidate
    return x


def _finish(
    p: QpProblem,
    x: NDArray[np.float64],
    work: _WorkingSet,
    iterations: int,
    trace: list[float],
    tol: float,
) -> QpSolution:
    x = _polish(p, x, work)
    duals = np.zeros(p.m)
    if work.rows:
        # Multipliers minimizing ||Hx + g + A_W^T mu|| for the polished x
        mu = np.linalg.lstsq(p.A[work.rows].T, -_precise_gradient(p, x), rcond=None)[0]
        duals[work.rows] = np.maximum(mu, 0.0)
    residual = kkt_residual(p, x, duals)
    logger.debug(
        f"QP solved: n={p.n}, m={p.m}, |W|={len(work.rows)}, iterations={iterations}, "
        f"KKT residual={residual:.3e}"
    )
    if residual > tol:
        logger.warning(
            f"QP KKT residual {residual:.2e} exceeds {tol:.0e} after refinement; "
            f"H is too ill-conditioned for the tolerance (n={p.n})"
        )
    return QpSolution(
        x=x,
        duals=duals,
        kkt_residual=residual,
        active_set=tuple(sorted(work.rows)),
        iterations=iterations,
        objective=p.objective(x),
        trace=tuple(trace),
    )
