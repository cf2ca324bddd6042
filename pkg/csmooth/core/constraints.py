"""
Shape constraints on piecewise-linear functions.

This module provides:
- Compilation of a ConstraintSet (bounds and/or monotonicity) into linear
  inequalities A c <= b on knot values
- Audit-grid violation measurement for arbitrary functions
- Structured feasible points (box clip plus running max/min)
- The fine-grid RKHS projection used to estimate alpha_N
"""

import logging
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from csmooth.core import grid as grids
from csmooth.core import qpsolver
from csmooth.core.grid import KnotGrid, PiecewiseLinear
from csmooth.core.qpsolver import QpInfeasibleError, QpProblem, QpSolution
from csmooth.core.rkhs import KernelInterpolant, RkhsContext
from csmooth.models import ConstraintSet

logger = logging.getLogger(__name__)

# Rows are keyed by the knot locations they involve, so working sets carry
# over between nested grids
RowKey = tuple[str, float] | tuple[str, float, float]


class ConstraintError(Exception):
    """Base exception for constraint errors."""

    def __init__(self, message: str, error_code: str | None = None):
        self.message = message
        self.error_code = error_code
        super().__init__(self.message)


class ConstraintInfeasibleError(ConstraintError):
    """The constraint set and the kernel space do not intersect (Condition 2)."""

    def __init__(self, message: str):
        super().__init__(message, error_code="CONDITION_2")


@dataclass(frozen=True)
class LinearInequalities:
    A: NDArray[np.float64]
    b: NDArray[np.float64]
    descriptions: tuple[str, ...]
    keys: tuple[RowKey, ...]

    @property
    def m(self) -> int:
        return int(self.b.size)

    def max_violation(self, c: ArrayLike) -> float:
        return float(np.max(self.A @ np.asarray(c, dtype=np.float64) - self.b, initial=0.0))

    def rows_for(self, keys: set[RowKey]) -> tuple[int, ...]:
        """Indices of the rows whose key is in keys."""
        return tuple(i for i, key in enumerate(self.keys) if key in keys)


def compile(cs: ConstraintSet, grid: KnotGrid) -> LinearInequalities:
    """
    Knot-level inequalities equivalent to P(u_N) in C.

    Bounds give 2N rows (-c_j <= -lower, c_j <= upper), monotonicity N - 1
    ordering rows between consecutive knots. Consecutive knots straddle every
    hole of F, so ordering rows also order the hole bridges.

    Example:
        >>> compile(ConstraintSet(monotone="increasing"), equispaced(3)).m
        2
    """
    N = grid.N
    knots = grid.knots
    blocks: list[NDArray[np.float64]] = []
    rhs: list[NDArray[np.float64]] = []
    descriptions: list[str] = []
    keys: list[RowKey] = []

    if cs.bounds is not None:
        eye = np.eye(N)
        blocks += [-eye, eye]
        rhs += [np.full(N, -cs.bounds.lower), np.full(N, cs.bounds.upper)]
        descriptions += [f"c({t:.6g}) >= {cs.bounds.lower}" for t in knots]
        descriptions += [f"c({t:.6g}) <= {cs.bounds.upper}" for t in knots]
        keys += [("lower", float(t)) for t in knots]
        keys += [("upper", float(t)) for t in knots]

    if cs.monotone is not None and N > 1:
        sign = 1.0 if cs.monotone == "increasing" else -1.0
        D = np.zeros((N - 1, N))
        rows = np.arange(N - 1)
        D[rows, rows] = sign
        D[rows, rows + 1] = -sign
        blocks.append(D)
        rhs.append(np.zeros(N - 1))
        relation = "<=" if cs.monotone == "increasing" else ">="
        descriptions += [
            f"c({a:.6g}) {relation} c({b:.6g})" for a, b in zip(knots, knots[1:], strict=False)
        ]
        keys += [("order", float(a), float(b)) for a, b in zip(knots, knots[1:], strict=False)]

    A = np.vstack(blocks) if blocks else np.zeros((0, N))
    b = np.concatenate(rhs) if rhs else np.zeros(0)
    return LinearInequalities(A=A, b=b, descriptions=tuple(descriptions), keys=tuple(keys))


def violation(cs: ConstraintSet, f: grids.Evaluator | ArrayLike, audit: ArrayLike) -> float:
    """
    Largest detected constraint violation of f on the audit points.

    Bound violations are measured pointwise; monotonicity by the worst wrong-way
    increment between consecutive audit points. 0 means nothing was detected.
    """
    points = np.asarray(audit, dtype=np.float64)
    values = np.asarray(f(points) if callable(f) else f, dtype=np.float64)
    worst = 0.0
    if cs.bounds is not None:
        worst = max(
            worst,
            float(np.max(cs.bounds.lower - values, initial=0.0)),
            float(np.max(values - cs.bounds.upper, initial=0.0)),
        )
    if cs.monotone is not None and values.size > 1:
        steps = np.diff(values)
        if cs.monotone == "decreasing":
            steps = -steps
        worst = max(worst, float(np.max(-steps, initial=0.0)))
    return worst


def feasible_start(cs: ConstraintSet, values: ArrayLike) -> NDArray[np.float64]:
    """Feasible knot values near `values`: clip to the bounds, then a running max (min)."""
    c = np.array(values, dtype=np.float64)
    if cs.bounds is not None:
        c = np.clip(c, cs.bounds.lower, cs.bounds.upper)
    if cs.monotone == "increasing":
        c = np.maximum.accumulate(c)
    elif cs.monotone == "decreasing":
        c = np.minimum.accumulate(c)
    return c


@dataclass(frozen=True)
class AlphaProjection:
    alpha_est: float
    projection: PiecewiseLinear
    qp: QpSolution | None = None
    label: str = "estimated"


def project_alpha(
    ctx_fine: RkhsContext,
    h: KernelInterpolant,
    cs: ConstraintSet,
    tol: float = 1e-8,
) -> AlphaProjection:
    """
    Distance in ||.||_ref from pi_ref(h) to the constraint set on the fine grid.

    Solves min_p (p - c_h)^T Gamma_ref^{-1} (p - c_h) s.t. A_ref p <= b_ref with
    c_h = h(fine knots). This is the fine-grid estimate of alpha_N.

    Raises:
        ConstraintInfeasibleError: If the compiled fine-grid system is empty
    """
    fine = ctx_fine.grid
    target = np.asarray(h(fine.knots), dtype=np.float64)
    ineq = compile(cs, fine)
    label = f"estimated, N_ref = {fine.N}"
    if ineq.max_violation(target) <= qpsolver.PRIMAL_TOL:
        return AlphaProjection(0.0, PiecewiseLinear(fine, target), None, label)

    G_inv = ctx_fine.gram_inverse
    problem = QpProblem(
        H=2.0 * G_inv,
        g=-2.0 * (G_inv @ target),
        A=ineq.A,
        b=ineq.b,
        x0=feasible_start(cs, target),
    )
    try:
        solution = qpsolver.solve(problem, tol=tol)
    except QpInfeasibleError as e:
        raise ConstraintInfeasibleError(
            f"No function on the {fine.N}-knot reference grid satisfies {cs.describe()}: "
            f"{e.message}"
        ) from e
    gap = solution.x - target
    alpha = float(np.linalg.norm(ctx_fine.gram.half_solve(gap)))
    logger.debug(f"alpha projection on {fine.N} knots: alpha={alpha:.4e}, |W|={len(solution.active_set)}")
    return AlphaProjection(alpha, PiecewiseLinear(fine, solution.x), solution, label)
