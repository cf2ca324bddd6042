"""
Covariance kernels on [0, 1] and their Gram matrices.

This module provides:
- The modified Bessel function of the second kind K_nu (domain-checked)
- Matérn kernels of any order 0 < nu <= 10 and the squared exponential
- Gram matrices with a Cholesky factorization (no silent jitter)
- Hölder regularity parameters (beta, c_K) of a kernel

Every function here is pure; factorizations are immutable once built and can
be shared between worker processes.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import linalg, special

from csmooth.models import HolderParams, Kernel

logger = logging.getLogger(__name__)

NU_MAX = 10.0
# Diagonal jitter, relative to sigma2, added only on explicit request
JITTER_SCALE = 1e-10
HOLDER_GRID_STEP = 1e-4
HOLDER_SAFETY = 1.05


class KernelError(Exception):
    """Base exception for kernel errors."""

    def __init__(self, message: str, error_code: str | None = None):
        self.message = message
        self.error_code = error_code
        super().__init__(self.message)


class BesselDomainError(KernelError):
    """Raised when K_nu(x) is requested outside x > 0, 0 < nu <= 10."""

    def __init__(self, message: str):
        super().__init__(message, error_code="BESSEL_DOMAIN")


class NotPositiveDefiniteError(KernelError):
    """Raised when a Gram matrix cannot be Cholesky-factorized (Condition 3)."""

    def __init__(self, message: str):
        super().__init__(message, error_code="CONDITION_3")


def bessel_K(nu: float, x: ArrayLike) -> NDArray[np.float64]:
    """
    Modified Bessel function of the second kind K_nu(x).

    Args:
        nu: Order, 0 < nu <= 10
        x: Argument(s), all strictly positive

    Returns:
        K_nu evaluated elementwise, same shape as x

    Raises:
        BesselDomainError: If x <= 0 or nu is out of range

    Example:
        >>> float(bessel_K(0.5, 1.0))  # sqrt(pi / 2) * exp(-1)
        0.46106850444789...
    """
    if not 0 < nu <= NU_MAX:
        raise BesselDomainError(f"Bessel order nu={nu} outside (0, {NU_MAX}]")
    values = np.asarray(x, dtype=np.float64)
    if np.any(~np.isfinite(values)) or np.any(values <= 0):
        raise BesselDomainError("Bessel argument must be finite and > 0")
    return np.asarray(special.kv(nu, values), dtype=np.float64)


def _matern_profile(k: Kernel, r: NDArray[np.float64]) -> NDArray[np.float64]:
    nu = float(k.nu)  # type: ignore[arg-type]
    out = np.full(r.shape, k.sigma2, dtype=np.float64)
    positive = r > 0
    z = np.sqrt(2.0 * nu) * r[positive] / k.lengthscale
    # log-space: kve(nu, z) = kv(nu, z) * exp(z) stays finite at both ends
    log_value = (
        (1.0 - nu) * np.log(2.0)
        - special.gammaln(nu)
        + nu * np.log(z)
        + np.log(special.kve(nu, z))
        - z
    )
    out[positive] = k.sigma2 * np.exp(log_value)
    return out


def _squared_exponential_profile(k: Kernel, r: NDArray[np.float64]) -> NDArray[np.float64]:
    return k.sigma2 * np.exp(-0.5 * (r / k.lengthscale) ** 2)


def kernel_profile(k: Kernel, r: ArrayLike) -> NDArray[np.float64]:
    """Stationary profile k(r) for distances r >= 0; k(0) = sigma2 exactly."""
    distances = np.abs(np.asarray(r, dtype=np.float64))
    if k.family == "matern":
        return _matern_profile(k, distances)
    return _squared_exponential_profile(k, distances)


def kernel_eval(k: Kernel, x: float, x_prime: float) -> float:
    """K(x, x') for a single pair; the diagonal bypasses the Bessel limit."""
    if x == x_prime:
        return k.sigma2
    return float(kernel_profile(k, np.array([x - x_prime]))[0])


def matrix(k: Kernel, xs: ArrayLike, ys: ArrayLike) -> NDArray[np.float64]:
    """Cross-covariance matrix (K(x_i, y_j))_{ij}."""
    left = np.atleast_1d(np.asarray(xs, dtype=np.float64))
    right = np.atleast_1d(np.asarray(ys, dtype=np.float64))
    return kernel_profile(k, left[:, None] - right[None, :])


@dataclass(frozen=True)
class GramFactor:
    """Gram matrix of a kernel at a set of knots with its Cholesky factor."""

    knots: NDArray[np.float64]
    matrix: NDArray[np.float64]
    lower: NDArray[np.float64] = field(repr=False)
    jitter: float = 0.0

    @property
    def size(self) -> int:
        return int(self.knots.size)

    @property
    def jittered(self) -> bool:
        return self.jitter > 0

    def solve(self, rhs: ArrayLike) -> NDArray[np.float64]:
        """Gamma^{-1} rhs through two triangular solves."""
        return np.asarray(
            linalg.cho_solve((self.lower, True), np.asarray(rhs, dtype=np.float64)),
            dtype=np.float64,
        )

    def half_solve(self, rhs: ArrayLike) -> NDArray[np.float64]:
        """L^{-1} rhs, so that ||L^{-1} c||^2 = c^T Gamma^{-1} c."""
        return np.asarray(
            linalg.solve_triangular(
                self.lower, np.asarray(rhs, dtype=np.float64), lower=True
            ),
            dtype=np.float64,
        )

    def inverse(self) -> NDArray[np.float64]:
        """Explicit symmetric Gamma^{-1} (formed once per fit)."""
        inv = self.solve(np.eye(self.size))
        return 0.5 * (inv + inv.T)


def gram(k: Kernel, knots: ArrayLike, *, jitter: bool = False) -> GramFactor:
    """
    Build Gamma_N = (K(t_i, t_j)) and factorize it.

    Args:
        k: Kernel
        knots: Strictly increasing knots in [0, 1]
        jitter: Add JITTER_SCALE * sigma2 to the diagonal before factorizing.
            Never applied automatically; the result records it.

    Returns:
        GramFactor holding the matrix, its lower Cholesky factor and the jitter

    Raises:
        KernelError: If the knots are not strictly increasing in [0, 1]
        NotPositiveDefiniteError: If the factorization fails
    """
    t = np.atleast_1d(np.asarray(knots, dtype=np.float64))
    if t.size == 0 or np.any(np.diff(t) <= 0) or t[0] < 0 or t[-1] > 1:
        raise KernelError(
            "Gram knots must be strictly increasing in [0, 1]", error_code="INVALID_KNOTS"
        )
    G = matrix(k, t, t)
    added = 0.0
    if jitter:
        added = JITTER_SCALE * k.sigma2
        G = G + added * np.eye(t.size)
        logger.info(f"Gram jitter {added:.3e} added on {t.size} knots")
    try:
        lower, _ = linalg.cho_factor(G, lower=True, check_finite=True)
    except linalg.LinAlgError:
        raise NotPositiveDefiniteError(
            f"Gram matrix of {t.size} knots is not positive definite "
            f"(Condition 3 violated; {k.family}, lengthscale={k.lengthscale}, nu={k.nu}). "
            "Retry with jitter enabled (--jitter / kernel.jitter = true)."
        )
    return GramFactor(knots=t, matrix=G, lower=np.tril(lower), jitter=added)


def holder_beta(k: Kernel) -> float:
    """beta = min(1, 2 nu) for Matérn kernels, 1 for the squared exponential."""
    if k.family == "matern":
        return min(1.0, 2.0 * float(k.nu))  # type: ignore[arg-type]
    return 1.0


def holder_params(k: Kernel, step: float = HOLDER_GRID_STEP) -> HolderParams:
    """
    Hölder exponent and an estimated constant c_K for Condition 1.

    c_K is the largest quotient |K(u,s) - K(u,t)| / |s - t|^beta over triples
    (u, s, t) of a grid of the given step on [0, 1], inflated by 5%. For a
    stationary kernel the quotient only depends on the offsets a = s - u and
    b = t - u, so the search runs over offset pairs at a set of lags.
    """
    beta = holder_beta(k)
    n = int(round(1.0 / step))
    profile = kernel_profile(k, np.arange(n + 1) * step)
    lags = np.unique(
        np.concatenate([np.arange(1, min(n, 200) + 1), np.geomspace(200, n, 120).astype(int)])
    )
    best = 0.0
    for lag in lags:
        i = np.arange(-n, n - lag + 1)
        j = i + lag
        # offsets reachable by some u in [0, 1]
        reachable = (np.maximum(j, 0) - np.minimum(i, 0)) <= n
        diff = np.abs(profile[np.abs(i[reachable])] - profile[np.abs(j[reachable])])
        if diff.size:
            best = max(best, float(diff.max()) / (lag * step) ** beta)
    c_K = HOLDER_SAFETY * best
    logger.debug(f"holder_params: beta={beta}, c_K={c_K:.6g} (estimated, step={step})")
    return HolderParams(beta=beta, c_K=max(c_K, np.finfo(float).tiny), estimated=True)
