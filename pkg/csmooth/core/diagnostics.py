"""
Quantities of the convergence error bounds.

Every sup-norm is a maximum over the audit points of F. The unknown limit
u_F is replaced by a reference fit on N_ref equispaced knots of F; constants
that depend on it inherit this proxy and are labeled in the report.
"""

import logging
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from csmooth.core import constraints, kernels, rkhs, smoother
from csmooth.core import grid as grids
from csmooth.core.constraints import AlphaProjection
from csmooth.core.grid import KnotGrid, SampledFunction
from csmooth.core.rkhs import RkhsContext
from csmooth.core.smoother import MapSolution, Observations
from csmooth.models import BoundReport, ConstraintSet, HolderParams, Kernel

logger = logging.getLogger(__name__)

PSI_MESH_POINTS = 200
# Pair distances are compared with this relative slack so that |s - t| = delta counts
MODULUS_SLACK = 1e-12
ALPHA_ZERO_TOL = 1e-10


class BoundViolationError(Exception):
    """Raised when an observed error exceeds its computed bound."""

    def __init__(self, message: str, report: BoundReport):
        self.message = message
        self.error_code = "BOUND_VIOLATION"
        self.report = report
        super().__init__(self.message)


class _RangeExtrema:
    """Sparse tables answering max/min over index ranges [i, j) in O(1)."""

    def __init__(self, values: NDArray[np.float64]):
        self.maxima = [values]
        self.minima = [values]
        width = 1
        while 2 * width <= values.size:
            prev_max, prev_min = self.maxima[-1], self.minima[-1]
            self.maxima.append(np.maximum(prev_max[:-width], prev_max[width:]))
            self.minima.append(np.minimum(prev_min[:-width], prev_min[width:]))
            width *= 2

    def spread(self, start: NDArray[np.intp], stop: NDArray[np.intp]) -> NDArray[np.float64]:
        """max - min of values[start:stop] for each pair (stop > start)."""
        length = stop - start
        level = np.floor(np.log2(length)).astype(int)
        out = np.empty(start.size)
        for k in np.unique(level):
            sel = level == k
            lo, hi = start[sel], stop[sel] - (1 << int(k))
            top = np.maximum(self.maxima[k][lo], self.maxima[k][hi])
            bottom = np.minimum(self.minima[k][lo], self.minima[k][hi])
            out[sel] = top - bottom
        return out


def modulus_M(f: SampledFunction, delta: float, _table: _RangeExtrema | None = None) -> float:
    """
    Modulus of continuity max{|f(s) - f(t)| : |s - t| <= delta} over sampled pairs.

    Example:
        >>> x = np.linspace(0, 1, 101)
        >>> round(modulus_M(SampledFunction(x, x), 0.1), 12)
        0.1
    """
    x, v = f.points, f.values
    if x.size < 2:
        return 0.0
    delta = min(delta, 1.0)
    table = _table or _RangeExtrema(v)
    start = np.arange(x.size)
    stop = np.searchsorted(x, x + delta * (1.0 + MODULUS_SLACK) + 1e-15, side="right")
    return float(table.spread(start, stop).max())


def psi(f: SampledFunction, delta: float) -> float:
    """
    Regularity indicator sup_{t >= 1} M_f(t delta) / t.

    t runs over a logarithmic mesh of [1, max(1/delta, 1)] plus t = 2; beyond
    t = 1/delta the ratio is M_f(1) / t, largest at the mesh end.
    """
    if delta <= 0:
        return 0.0
    table = _RangeExtrema(f.values)
    top = max(1.0 / delta, 1.0)
    mesh = np.unique(np.concatenate([np.geomspace(1.0, top, PSI_MESH_POINTS), [1.0, 2.0]]))
    best = max(modulus_M(f, t * delta, table) / t for t in mesh)
    return max(best, modulus_M(f, 1.0, table) * min(delta, 1.0))


def interp_error_FN(grid: KnotGrid, f: SampledFunction) -> float:
    """F_N(f) = sup over the sample points of |pi_N(f) - f|."""
    projected = grids.project_pi_N(grid, f)
    return float(np.max(np.abs(projected(f.points) - f.values), initial=0.0))


def kernel_gap_GN(ctx: RkhsContext, audit: NDArray[np.float64]) -> float:
    """
    G_N = max_t K_N(t,t) + K(t,t) - 2 sum_i phi_i(t) K(t, t_i), clipped at 0.

    This is the squared RKHS distance between K(., t) and rho_N(K_N(., t)).
    """
    hats = grids.hat_matrix(ctx.grid, audit)
    cross = kernels.matrix(ctx.kernel, audit, ctx.grid.knots)
    gap = (
        rkhs.kernel_KN_diagonal(ctx, audit)
        + ctx.kernel.sigma2
        - 2.0 * np.sum(hats * cross, axis=1)
    )
    return float(max(0.0, float(gap.max(initial=0.0))))


def _power(delta: float, exponent: float) -> float:
    """delta ** exponent in log space; 0 for delta = 0."""
    if delta <= 0:
        return 0.0
    return float(np.exp(exponent * np.log(delta)))


@dataclass(frozen=True)
class ReferenceFit:
    """The N_ref fit standing in for u_F, with its norm and audit samples."""

    solution: MapSolution
    norm: float

    @property
    def ctx(self) -> RkhsContext:
        return self.solution.problem.ctx

    def sampled(self, audit: NDArray[np.float64]) -> SampledFunction:
        return SampledFunction(audit, smoother.evaluate(self.solution, audit))


def build_reference(
    kernel: Kernel,
    domain: grids.DomainF,
    obs: Observations,
    cs: ConstraintSet | None,
    n_ref: int,
    *,
    jitter: bool = False,
) -> ReferenceFit:
    """Fit on equispaced knots of F (plus interval ends) as the u_F proxy."""
    ref_grid = grids.equispaced_in(domain, n_ref)
    solution = smoother.fit(kernel, ref_grid, obs, cs, jitter=jitter)
    norm = rkhs.norm_N(solution.problem.ctx, solution.coeffs)
    logger.info(
        f"Reference fit on {ref_grid.N} knots: J={solution.objective:.6g}, ||u_F||={norm:.6g}"
    )
    return ReferenceFit(solution=solution, norm=norm)


@dataclass(frozen=True)
class BoundConstants:
    c: float
    d1: float
    d2: float
    d3: float
    d4: float
    d5: float
    d6: float
    d7: float
    d8: float


def bound_constants(
    fit: MapSolution,
    reference: ReferenceFit,
    obs: Observations,
    hparams: HolderParams,
    alpha: AlphaProjection,
    c_embed: float,
) -> BoundConstants:
    """
    Constants d1..d8 of the error bounds.

    d6 and d7 are evaluated on the current fit and its fine-grid projection
    rather than bounded uniformly in N.
    """
    n, tau = obs.n, obs.tau
    c = c_embed
    norm_F = reference.norm
    norm_N = rkhs.norm_N(fit.problem.ctx, fit.coeffs)
    y_max = obs.max_abs_y

    d1 = float(np.sqrt(8.0 * hparams.c_K)) * norm_F
    d2 = 6.0 * hparams.c_K
    d3 = (2.0 * n * d1 / tau) * (c * norm_F + y_max)
    d4 = (2.0 * n * float(np.sqrt(d2)) / tau) * norm_N * (c * norm_N + y_max)
    d5 = d3 + d4

    domain = fit.grid.domain
    if n:
        h = rkhs.interpolant_rho(fit.problem.ctx, fit.coeffs)
        projected = grids.extend_P(domain, alpha.projection, obs.x)
        interpolated = grids.extend_P(domain, h, obs.x)
        d6 = float(np.max(np.abs(projected + interpolated - 2.0 * obs.y)))
    else:
        d6 = 0.0
    d7 = rkhs.norm_N(reference.ctx, alpha.projection) + norm_N
    d8 = d7 + n * c * d6 / tau
    return BoundConstants(c=c, d1=d1, d2=d2, d3=d3, d4=d4, d5=d5, d6=d6, d7=d7, d8=d8)


def theorem_bounds(
    constants: BoundConstants, alpha: float, delta: float, beta: float
) -> tuple[float, float]:
    """
    Right-hand sides c sqrt(d5 delta^{beta/2}) + d1 delta^{beta/2} and
    c sqrt(d8 alpha + d5 delta^{beta/2}) + d1 delta^{beta/2}.
    """
    half = _power(delta, beta / 2.0)
    k = constants
    bound55 = k.c * float(np.sqrt(k.d5 * half)) + k.d1 * half
    bound56 = k.c * float(np.sqrt(k.d8 * alpha + k.d5 * half)) + k.d1 * half
    return bound55, bound56


def build_report(
    fit: MapSolution,
    reference: ReferenceFit,
    hparams: HolderParams,
    labels: dict[str, str] | None = None,
) -> tuple[BoundReport, AlphaProjection]:
    """
    Evaluate every bound quantity for one fit against the reference fit.

    Returns:
        The report and the fine-grid projection behind alpha_N (reused by callers)
    """
    problem = fit.problem
    ctx, obs, cs = problem.ctx, problem.obs, problem.cs
    grid = fit.grid
    beta = hparams.beta
    delta = grids.grid_size_delta(grid)
    audit = grids.audit_points(grid.domain, grid)
    u_F = reference.sampled(audit)

    F_N = interp_error_FN(grid, u_F)
    psi_bound = 2.0 * psi(u_F, delta)
    G_N = kernel_gap_GN(ctx, audit)
    G_N_bound = 6.0 * hparams.c_K * _power(delta, beta)
    c_embed = rkhs.embedding_constant(ctx, audit)

    h = rkhs.interpolant_rho(ctx, fit.coeffs)
    if cs is None:
        target = grids.project_pi_N(reference.ctx.grid, h)
        alpha = AlphaProjection(0.0, target, None, "unconstrained")
    else:
        alpha = constraints.project_alpha(reference.ctx, h, cs)
    k = bound_constants(fit, reference, obs, hparams, alpha, c_embed)
    bound55, bound56 = theorem_bounds(k, alpha.alpha_est, delta, beta)

    sup_error = float(np.max(np.abs(smoother.evaluate(fit, audit) - u_F.values)))

    # Error splitting through pi_N(u_F)
    pi_uF = grids.project_pi_N(grid, u_F)
    pi_norm = rkhs.norm_N(ctx, pi_uF)
    E_hat = reference.norm**2 - pi_norm**2
    diff = grids.PiecewiseLinear(grid, pi_uF.coeffs - fit.coeffs.coeffs)
    inner_error = rkhs.norm_N(ctx, diff)
    half = _power(delta, beta / 2.0)
    split_bound = k.c * inner_error + k.d1 * half

    tau = obs.tau
    if obs.n:
        pi_x = grids.extend_P(grid.domain, pi_uF, obs.x)
        uF_x = smoother.evaluate(reference.solution, obs.x)
        epsilon = float(np.sum((pi_x - uF_x) * (pi_x + uF_x - 2.0 * obs.y)) / tau)
        fit_x = smoother.evaluate(fit, obs.x)
        h_x = grids.extend_P(grid.domain, h, obs.x)
        eta = float(np.sum((fit_x - h_x) * (fit_x + h_x - 2.0 * obs.y)) / tau)
    else:
        epsilon = eta = 0.0
    convexity_gap = (
        smoother.objective(problem, pi_uF.coeffs) - fit.objective - inner_error**2
    )

    holder_scale = float(np.sqrt(2.0 * hparams.c_K)) * reference.norm * half
    holder_ratio = modulus_M(u_F, delta) / holder_scale if holder_scale > 0 else 0.0

    report = BoundReport(
        N=grid.N,
        delta_N=delta,
        beta=beta,
        c_K=hparams.c_K,
        F_N=F_N,
        psi_bound=psi_bound,
        G_N=G_N,
        G_N_bound=G_N_bound,
        alpha_N=alpha.alpha_est,
        c_embed=k.c,
        d1=k.d1,
        d2=k.d2,
        d3=k.d3,
        d4=k.d4,
        d5=k.d5,
        d6=k.d6,
        d7=k.d7,
        d8=k.d8,
        bound_thm55=bound55,
        bound_thm55_applicable=alpha.alpha_est <= ALPHA_ZERO_TOL,
        bound_thm56=bound56,
        sup_error=sup_error,
        E_hat_N=E_hat,
        inner_error=inner_error,
        split_bound=split_bound,
        epsilon_N=epsilon,
        epsilon_N_bound=k.d3 * half,
        eta_N=eta,
        eta_N_bound=k.d4 * half,
        convexity_gap=convexity_gap,
        holder_ratio=holder_ratio,
        labels={
            "c_K": "estimated" if hparams.estimated else "analytic",
            "alpha_N": alpha.label,
            "c_embed": "witness",
            "d6": "empirical",
            "d7": "empirical",
            "u_F": f"proxy, N_ref = {reference.ctx.N}",
            **(labels or {}),
        },
    )
    logger.debug(
        f"Bound report N={grid.N}: delta={delta:.4g}, sup_error={sup_error:.3e}, "
        f"bound56={bound56:.3e}, alpha={alpha.alpha_est:.3e}"
    )
    return report, alpha


def check_report(report: BoundReport) -> None:
    """Raise BoundViolationError when sup_error exceeds bound_thm56."""
    if report.sup_error > report.bound_thm56:
        raise BoundViolationError(
            f"sup_error {report.sup_error:.6e} exceeds bound {report.bound_thm56:.6e} "
            f"at N={report.N} (c_K underestimate or implementation bug): "
            f"{report.model_dump_json()}",
            report,
        )
