"""
Constrained optimal smoothing on a knot grid.

The discrete problem minimizes

    J_{N,F}(u_N) = ||u_N||_N^2 + (1 / tau) sum_i (P(u_N)(x_i) - y_i)^2

over knot values satisfying the compiled constraints. Its minimizer is the MAP
of the finite-dimensional constrained Gaussian process.
"""

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import linalg

from csmooth.core import constraints, kernels, qpsolver
from csmooth.core import grid as grids
from csmooth.core.constraints import LinearInequalities, RowKey
from csmooth.core.grid import KnotGrid, PiecewiseLinear
from csmooth.core.kernels import KernelError
from csmooth.core.qpsolver import (
    QpInfeasibleError,
    QpMaxIterationsError,
    QpProblem,
    QpSolution,
    QpSolverError,
)
from csmooth.core.rkhs import RkhsContext
from csmooth.models import ConstraintSet, Kernel

logger = logging.getLogger(__name__)


class SmootherError(Exception):
    """Base exception for smoother errors."""

    def __init__(self, message: str, error_code: str | None = None):
        self.message = message
        self.error_code = error_code
        super().__init__(self.message)


@dataclass(frozen=True)
class Observations:
    x: NDArray[np.float64]
    y: NDArray[np.float64]
    tau: float

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=np.float64).reshape(-1)
        y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        if x.shape != y.shape:
            raise SmootherError(f"x has {x.size} entries but y has {y.size}", "INVALID_DATA")
        if not self.tau > 0:
            raise SmootherError(f"Noise variance tau must be > 0, got {self.tau}", "INVALID_DATA")
        if np.any((x < 0) | (x > 1)):
            raise SmootherError("Observation inputs must lie in [0, 1]", "INVALID_DATA")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return int(self.x.size)

    @property
    def max_abs_y(self) -> float:
        return float(np.max(np.abs(self.y), initial=0.0))


@dataclass(frozen=True, eq=False)
class SmoothingProblem:
    ctx: RkhsContext
    obs: Observations
    cs: ConstraintSet | None
    design: NDArray[np.float64]
    inequalities: LinearInequalities
    qp: QpProblem


@dataclass(frozen=True, eq=False)
class MapSolution:
    coeffs: PiecewiseLinear
    objective: float
    qp: QpSolution
    problem: SmoothingProblem = field(repr=False)

    @property
    def grid(self) -> KnotGrid:
        return self.coeffs.grid

    @property
    def active_keys(self) -> set[RowKey]:
        keys = self.problem.inequalities.keys
        return {keys[i] for i in self.qp.active_set}


def assemble(
    ctx: RkhsContext,
    obs: Observations,
    cs: ConstraintSet | None,
    warm_keys: set[RowKey] | None = None,
) -> SmoothingProblem:
    """
    Build the QP whose objective plus ||y||^2 / tau equals J_{N,F}.

    H = 2 (Gamma_N^{-1} + Phi^T Phi / tau) and g = -2 Phi^T y / tau, where
    Phi_ij = P(phi_j|F)(x_i). The start is the unconstrained minimizer made
    feasible by feasible_start; warm_keys name constraint rows expected active.
    """
    grid = ctx.grid
    design = grids.extension_matrix(grid, obs.x) if obs.n else np.zeros((0, grid.N))
    H = 2.0 * (ctx.gram_inverse + design.T @ design / obs.tau)
    H = 0.5 * (H + H.T)
    g = -2.0 * design.T @ obs.y / obs.tau
    if cs is None:
        ineq = LinearInequalities(np.zeros((0, grid.N)), np.zeros(0), (), ())
        x0 = None
    else:
        ineq = constraints.compile(cs, grid)
        try:
            unconstrained = linalg.solve(H, -g, assume_a="pos")
        except linalg.LinAlgError:
            unconstrained = np.zeros(grid.N)
        x0 = constraints.feasible_start(cs, unconstrained)
    warm = ineq.rows_for(warm_keys) if warm_keys else ()
    qp = QpProblem(H=H, g=g, A=ineq.A, b=ineq.b, x0=x0, warm_start=warm)
    return SmoothingProblem(ctx=ctx, obs=obs, cs=cs, design=design, inequalities=ineq, qp=qp)


def objective(problem: SmoothingProblem, coeffs: ArrayLike) -> float:
    """J_{N,F} at arbitrary knot values."""
    c = np.asarray(coeffs, dtype=np.float64)
    norm_sq = float(np.sum(problem.ctx.gram.half_solve(c) ** 2))
    misfit = problem.design @ c - problem.obs.y
    return norm_sq + float(misfit @ misfit) / problem.obs.tau


def fit_map(problem: SmoothingProblem, tol: float = 1e-8) -> MapSolution:
    """
    Solve the assembled problem.

    Raises:
        SmootherError: CONDITION_2 if the constraints are infeasible,
            MAX_ITERATIONS if the QP stalls, or the solver's own code otherwise
    """
    try:
        solution = qpsolver.solve(problem.qp, tol=tol)
    except QpInfeasibleError as e:
        raise SmootherError(
            f"Constraints {problem.cs.describe() if problem.cs else ''} are infeasible on "
            f"{problem.ctx.N} knots (Condition 2): {e.message}",
            error_code="CONDITION_2",
        ) from e
    except QpMaxIterationsError as e:
        logger.error(f"MAP fit on {problem.ctx.N} knots stalled: {e.message}")
        raise SmootherError(e.message, error_code="MAX_ITERATIONS") from e
    except QpSolverError as e:
        logger.error(f"MAP fit on {problem.ctx.N} knots failed: {e.message}", exc_info=True)
        raise SmootherError(e.message, error_code=e.error_code) from e

    y = problem.obs.y
    value = solution.objective + float(y @ y) / problem.obs.tau
    logger.debug(
        f"MAP on {problem.ctx.N} knots: J={value:.6g}, KKT={solution.kkt_residual:.2e}, "
        f"|W|={len(solution.active_set)}"
    )
    return MapSolution(
        coeffs=PiecewiseLinear(problem.ctx.grid, solution.x),
        objective=value,
        qp=solution,
        problem=problem,
    )


def fit(
    kernel: Kernel,
    grid: KnotGrid,
    obs: Observations,
    cs: ConstraintSet | None,
    *,
    jitter: bool = False,
    warm_keys: set[RowKey] | None = None,
) -> MapSolution:
    """Build the context, assemble and solve in one call."""
    try:
        ctx = RkhsContext.build(kernel, grid, jitter=jitter)
    except KernelError as e:
        raise SmootherError(e.message, error_code=e.error_code) from e
    return fit_map(assemble(ctx, obs, cs, warm_keys=warm_keys))


def unconstrained_reference(kernel: Kernel, obs: Observations, t: ArrayLike) -> NDArray[np.float64]:
    """
    Infinite-dimensional unconstrained smoother k_n(t)^T (K_n + tau I)^{-1} y.

    Example:
        >>> obs = Observations(np.array([0.5]), np.array([2.0]), tau=1.0)
        >>> float(unconstrained_reference(Kernel(), obs, [0.5])[0])  # sigma2 y / (sigma2 + tau)
        1.0
    """
    if obs.n == 0:
        raise SmootherError("The unconstrained smoother needs at least one observation")
    K = kernels.matrix(kernel, obs.x, obs.x) + obs.tau * np.eye(obs.n)
    weights = linalg.cho_solve(linalg.cho_factor(K, lower=True), obs.y)
    return np.asarray(kernels.matrix(kernel, t, obs.x) @ weights, dtype=np.float64)


def evaluate(solution: MapSolution, t: ArrayLike) -> NDArray[np.float64]:
    """P(u_{N,F})(t), bridging the holes of F affinely."""
    return grids.extend_P(solution.grid.domain, solution.coeffs, t)


def metadata(solution: MapSolution) -> dict[str, Any]:
    problem = solution.problem
    return {
        "kernel": problem.ctx.kernel.model_dump(),
        "tau": problem.obs.tau,
        "n_obs": problem.obs.n,
        "constraints": problem.cs.model_dump() if problem.cs else None,
        "domain": solution.grid.domain.to_list(),
        "objective": solution.objective,
        "kkt_residual": solution.qp.kkt_residual,
        "jitter": problem.ctx.gram.jitter,
    }


def to_csv(solution: MapSolution, path: Path) -> None:
    """knot,coefficient rows under a '# {json}' metadata header."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        handle.write(f"# {json.dumps(metadata(solution))}\n")
        writer = csv.writer(handle)
        writer.writerow(["knot", "coefficient"])
        for t, c in zip(solution.grid.knots, solution.coeffs.coeffs, strict=True):
            writer.writerow([format(float(t), ".17g"), format(float(c), ".17g")])
    logger.info(f"Wrote MAP on {solution.grid.N} knots to {path}")


def read_observations(path: Path, tau: float) -> Observations:
    """Read a data CSV with header x,y (lines starting with '#' are skipped)."""
    with path.open(newline="") as handle:
        rows = [line for line in handle if not line.startswith("#")]
    reader = csv.DictReader(rows)
    if reader.fieldnames is None or not {"x", "y"} <= set(reader.fieldnames):
        raise SmootherError(f"{path} must have an 'x,y' header", "INVALID_DATA")
    xs, ys = [], []
    for row in reader:
        xs.append(float(row["x"]))
        ys.append(float(row["y"]))
    return Observations(np.array(xs), np.array(ys), tau)


def write_observations(obs: Observations, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["x", "y"])
        for x, y in zip(obs.x, obs.y, strict=True):
            writer.writerow([format(float(x), ".17g"), format(float(y), ".17g")])
