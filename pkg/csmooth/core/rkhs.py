"""
Finite-dimensional RKHS algebra on a knot grid.

<u, v>_N = c_u^T Gamma_N^{-1} c_v makes span(phi_1..phi_N) an RKHS with kernel
K_N(x, x') = sum_ij K(t_i, t_j) phi_i(x) phi_j(x'). The kernel interpolant
rho_N maps it isometrically into the RKHS of K.
"""

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.typing import ArrayLike, NDArray

from csmooth.core import grid as grids
from csmooth.core import kernels
from csmooth.core.grid import GridError, KnotGrid, PiecewiseLinear
from csmooth.core.kernels import GramFactor, NotPositiveDefiniteError
from csmooth.models import Kernel

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class RkhsContext:
    """A kernel, a grid and the factorized Gram matrix of the kernel at the knots."""

    kernel: Kernel
    grid: KnotGrid
    gram: GramFactor

    @classmethod
    def build(cls, kernel: Kernel, grid: KnotGrid, *, jitter: bool = False) -> "RkhsContext":
        """Factorize Gamma_N once; contexts are rebuilt, never updated, on refinement."""
        return cls(kernel=kernel, grid=grid, gram=kernels.gram(kernel, grid.knots, jitter=jitter))

    @property
    def N(self) -> int:
        return self.grid.N

    @cached_property
    def gram_inverse(self) -> NDArray[np.float64]:
        return self.gram.inverse()

    def check(self, u: PiecewiseLinear) -> None:
        if not u.grid.same_knots(self.grid):
            raise GridError(
                f"Function on {u.grid.N} knots does not live on this {self.N}-knot grid",
                "GRID_MISMATCH",
            )


@dataclass(frozen=True)
class KernelInterpolant:
    """rho_N(v) = sum_i lambda_i K(., t_i) with Gamma_N lambda = c_v."""

    weights: NDArray[np.float64]
    kernel: Kernel
    knots: NDArray[np.float64]

    def __call__(self, t: ArrayLike) -> NDArray[np.float64]:
        return kernels.matrix(self.kernel, t, self.knots) @ self.weights

    def norm_sq(self) -> float:
        """||rho_N(v)||^2 in the RKHS of K, i.e. lambda^T Gamma_N lambda."""
        G = kernels.matrix(self.kernel, self.knots, self.knots)
        return float(self.weights @ G @ self.weights)


def inner_N(ctx: RkhsContext, u: PiecewiseLinear, v: PiecewiseLinear) -> float:
    """c_u^T Gamma_N^{-1} c_v through triangular solves."""
    ctx.check(u)
    ctx.check(v)
    return float(ctx.gram.half_solve(u.coeffs) @ ctx.gram.half_solve(v.coeffs))


def norm_N(ctx: RkhsContext, u: PiecewiseLinear) -> float:
    ctx.check(u)
    return float(np.linalg.norm(ctx.gram.half_solve(u.coeffs)))


def kernel_KN(ctx: RkhsContext, x: float, x_prime: float) -> float:
    """K_N(x, x') contracted over the at most two nonzero hats of each point."""
    rows = grids.hat_matrix(ctx.grid, [x, x_prime])
    return float(rows[0] @ ctx.gram.matrix @ rows[1])


def kernel_KN_diagonal(ctx: RkhsContext, ts: ArrayLike) -> NDArray[np.float64]:
    """K_N(t, t) for every t in ts."""
    rows = grids.hat_matrix(ctx.grid, ts)
    return np.einsum("ij,jk,ik->i", rows, ctx.gram.matrix, rows)


def section_KN(ctx: RkhsContext, t: float) -> PiecewiseLinear:
    """K_N(., t) as an element of the grid space: coefficients Gamma_N phi(t)."""
    return PiecewiseLinear(ctx.grid, ctx.gram.matrix @ grids.hat_matrix(ctx.grid, [t])[0])


def interpolant_rho(ctx: RkhsContext, v: PiecewiseLinear) -> KernelInterpolant:
    """Kernel interpolant of v: solves Gamma_N lambda = c_v."""
    ctx.check(v)
    return KernelInterpolant(
        weights=ctx.gram.solve(v.coeffs), kernel=ctx.kernel, knots=ctx.grid.knots
    )


def norm_HF_estimate(
    kernel: Kernel, f: grids.Evaluator, ref_grid: KnotGrid, *, jitter: bool = False
) -> float:
    """
    Fine-grid estimate ||pi_ref(f)||_ref of the RKHS norm ||f||_{H_F}.

    The estimate never exceeds the true norm and grows with nested refinement.

    Raises:
        NotPositiveDefiniteError: If the reference Gram matrix cannot be factorized
    """
    try:
        ctx = RkhsContext.build(kernel, ref_grid, jitter=jitter)
    except NotPositiveDefiniteError as e:
        logger.error(f"Reference grid of {ref_grid.N} knots: {e.message}")
        raise
    return norm_N(ctx, grids.project_pi_N(ref_grid, f))


def embedding_constant(ctx: RkhsContext, audit: ArrayLike) -> float:
    """
    Witness c with ||h||_inf <= c ||h|| on both H_F and the grid space.

    c = max over the audit points of sqrt(K(t, t)) and sqrt(K_N(t, t)); both
    inequalities follow from the reproducing property and Cauchy-Schwarz.
    """
    diag = kernel_KN_diagonal(ctx, audit)
    return float(np.sqrt(max(ctx.kernel.sigma2, float(diag.max(initial=0.0)))))
