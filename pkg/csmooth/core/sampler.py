"""
Constrained Gaussian process replicates and noisy observations.

Knot values are drawn from N(0, Gamma_N) truncated to {A c <= b} with a
systematic-scan Gibbs sampler in whitened coordinates z = L^{-1} c, where
Gamma_N = L L^T. Each coordinate of z is a standard normal truncated to the
interval the rows of A L leave it.

Seeds: a replicate seed s feeds numpy.random.SeedSequence(s), whose two
spawned children drive the chain and the observation draws. Sweeps over R
replicates spawn R children from the sweep seed.
"""

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import linalg, special

from csmooth.core import constraints
from csmooth.core import grid as grids
from csmooth.core.grid import KnotGrid, PiecewiseLinear
from csmooth.core.kernels import KernelError
from csmooth.core.rkhs import RkhsContext
from csmooth.core.smoother import Observations, write_observations
from csmooth.models import ConstraintSet, Kernel

logger = logging.getLogger(__name__)

BURN_IN = 500
THIN = 10
FEASIBILITY_TOL = 1e-10


class SamplerError(Exception):
    """Base exception for sampler errors."""

    def __init__(self, message: str, error_code: str | None = None):
        self.message = message
        self.error_code = error_code
        super().__init__(self.message)


@dataclass(frozen=True, eq=False)
class ReplicateSpec:
    kernel: Kernel
    cs: ConstraintSet
    grid: KnotGrid = field(default_factory=lambda: grids.equispaced(200))
    n_obs: int = 50
    tau: float = 0.05
    seed: int = 0
    burn_in: int = BURN_IN
    thin: int = THIN
    jitter: bool = False

    def __post_init__(self) -> None:
        if not self.tau > 0:
            raise SamplerError(f"tau must be > 0, got {self.tau}", "INVALID_SPEC")
        if self.n_obs < 0 or self.burn_in < 0 or self.thin < 1:
            raise SamplerError("n_obs and burn_in must be >= 0, thin >= 1", "INVALID_SPEC")


@dataclass(frozen=True)
class Replicate:
    replicate_id: int
    seed: int
    path: PiecewiseLinear
    obs: Observations


def truncated_normal(
    rng: np.random.Generator, mean: float, sd: float, lower: float, upper: float
) -> float:
    """
    One draw of N(mean, sd^2) restricted to [lower, upper] by inverse CDF.

    Works with log-CDFs so that intervals deep in either tail stay accurate.
    """
    if upper <= lower:
        return lower
    a, b = (lower - mean) / sd, (upper - mean) / sd
    sign = 1.0
    if a > 0:
        # Mirror right-tail intervals into the left tail
        a, b, sign = -b, -a, -1.0
    log_a, log_b = special.log_ndtr(a), special.log_ndtr(b)
    ratio = np.exp(log_a - log_b) if np.isfinite(log_a) else 0.0
    u = rng.random()
    log_p = log_b + np.log(ratio + u * (1.0 - ratio))
    z = float(np.clip(special.ndtri_exp(log_p), a, b))
    return float(np.clip(mean + sign * sd * z, lower, upper))


def _initial_point(cs: ConstraintSet, N: int) -> NDArray[np.float64]:
    """Strictly ordered (or constant) knot values inside the bounds."""
    lo, hi = -1.0, 1.0
    if cs.bounds is not None:
        lower, upper = cs.bounds.lower, cs.bounds.upper
        lo = lower if np.isfinite(lower) else upper - 2.0
        hi = upper if np.isfinite(upper) else lo + 2.0
    if cs.monotone is None:
        return np.full(N, 0.5 * (lo + hi))
    values = np.linspace(lo, hi, N + 2)[1:-1]
    return values if cs.monotone == "increasing" else values[::-1].copy()


def sample_chain(
    spec: ReplicateSpec,
    n_draws: int,
    thin: int | None = None,
    rng: np.random.Generator | None = None,
) -> NDArray[np.float64]:
    """
    Thinned Gibbs draws after spec.burn_in sweeps, shape (n_draws, N).

    The chain runs on z = L^{-1} c with Gamma_N = L L^T, where the prior is
    N(0, I) and the constraints read (A L) z <= b.

    Raises:
        SamplerError: If the Gram matrix fails or the constraints are infeasible
    """
    thin = spec.thin if thin is None else thin
    rng = rng or np.random.default_rng(spec.seed)
    try:
        ctx = RkhsContext.build(spec.kernel, spec.grid, jitter=spec.jitter)
    except KernelError as e:
        raise SamplerError(e.message, error_code=e.error_code) from e

    ineq = constraints.compile(spec.cs, spec.grid)
    N = spec.grid.N
    c = _initial_point(spec.cs, N)
    if ineq.max_violation(c) > FEASIBILITY_TOL:
        raise SamplerError(
            f"Constraints {spec.cs.describe()} admit no starting point (Condition 2)",
            "CONDITION_2",
        )

    L = ctx.gram.lower
    F = ineq.A @ L
    z = linalg.solve_triangular(L, c, lower=True)
    slack = ineq.b - F @ z
    rising = [np.flatnonzero(F[:, j] > 0) for j in range(N)]
    falling = [np.flatnonzero(F[:, j] < 0) for j in range(N)]

    def sweep() -> None:
        nonlocal slack
        # refreshed once per sweep to keep rank-one updates from drifting
        slack = ineq.b - F @ z
        for j in range(N):
            coef = F[:, j]
            up, down = rising[j], falling[j]
            room = np.maximum(slack, 0.0)
            upper = float(np.min(z[j] + room[up] / coef[up], initial=np.inf))
            lower = float(np.max(z[j] + room[down] / coef[down], initial=-np.inf))
            new = truncated_normal(rng, 0.0, 1.0, lower, upper)
            slack = slack - coef * (new - z[j])
            z[j] = new

    for _ in range(spec.burn_in):
        sweep()
    draws = np.empty((n_draws, N))
    for k in range(n_draws):
        for _ in range(thin):
            sweep()
        # clears round-off from the back-transform
        draws[k] = constraints.feasible_start(spec.cs, L @ z)
    logger.debug(f"Gibbs chain: N={N}, burn_in={spec.burn_in}, thin={thin}, draws={n_draws}")
    return draws


def sample_constrained(spec: ReplicateSpec, rng: np.random.Generator | None = None) -> PiecewiseLinear:
    """One replicate: the first retained draw of a seeded chain."""
    return PiecewiseLinear(spec.grid, sample_chain(spec, 1, rng=rng)[0])


def corrupt(
    path: PiecewiseLinear,
    xs: ArrayLike,
    tau: float,
    seed: int | np.random.Generator,
) -> Observations:
    """y_i = P(path)(x_i) + eps_i with eps ~ N(0, tau I)."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    x = np.asarray(xs, dtype=np.float64)
    clean = grids.extend_P(path.grid.domain, path, x) if x.size else np.zeros(0)
    return Observations(x, clean + np.sqrt(tau) * rng.standard_normal(x.size), tau)


def generate_replicate(spec: ReplicateSpec, replicate_id: int = 0) -> Replicate:
    """Path plus n_obs uniform inputs and their noisy values, all from spec.seed."""
    chain_seq, obs_seq = np.random.SeedSequence(spec.seed).spawn(2)
    path = sample_constrained(spec, rng=np.random.default_rng(chain_seq))
    obs_rng = np.random.default_rng(obs_seq)
    xs = obs_rng.random(spec.n_obs)
    obs = corrupt(path, xs, spec.tau, obs_rng)
    logger.info(f"Replicate {replicate_id}: N={spec.grid.N}, n_obs={spec.n_obs}, seed={spec.seed}")
    return Replicate(replicate_id=replicate_id, seed=spec.seed, path=path, obs=obs)


def replicate_seeds(seed: int, count: int) -> list[int]:
    """Independent 64-bit seeds spawned from one sweep seed."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(child.generate_state(1, dtype=np.uint64)[0]) for child in children]


def _generate(args: tuple[ReplicateSpec, int]) -> Replicate:
    spec, replicate_id = args
    return generate_replicate(spec, replicate_id)


def sample_replicates(spec: ReplicateSpec, count: int, workers: int = 1) -> list[Replicate]:
    """count replicates with spawned seeds, in replicate_id order."""
    jobs = [(replace(spec, seed=s), i) for i, s in enumerate(replicate_seeds(spec.seed, count))]
    if workers <= 1:
        return [_generate(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_generate, jobs))


def to_csv(replicate: Replicate, spec: ReplicateSpec, directory: Path) -> tuple[Path, Path]:
    """Write replicate_<id>.csv (knot,value) and observations_<id>.csv (x,y)."""
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "replicate_id": replicate.replicate_id,
        "seed": replicate.seed,
        "kernel": spec.kernel.model_dump(),
        "constraints": spec.cs.model_dump(),
        "N": spec.grid.N,
        "n_obs": spec.n_obs,
        "tau": spec.tau,
        "burn_in": spec.burn_in,
        "thin": spec.thin,
    }
    path_file = directory / f"replicate_{replicate.replicate_id}.csv"
    with path_file.open("w", newline="") as handle:
        handle.write(f"# {json.dumps(meta)}\n")
        writer = csv.writer(handle)
        writer.writerow(["knot", "value"])
        for t, v in zip(replicate.path.grid.knots, replicate.path.coeffs, strict=True):
            writer.writerow([format(float(t), ".17g"), format(float(v), ".17g")])

    obs_file = directory / f"observations_{replicate.replicate_id}.csv"
    write_observations(replicate.obs, obs_file)
    return path_file, obs_file
