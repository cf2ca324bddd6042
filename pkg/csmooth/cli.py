"""
Command-line interface: sample, fit, diagnose and converge.

Every command reads the same experiment settings (TOML file, CSMOOTH_*
environment variables, then flags) and writes its files under --out.
"""

import logging
from pathlib import Path
from typing import Annotated, Any

import typer
from pydantic import ValidationError

from csmooth.core import diagnostics, kernels, sampler, smoother
from csmooth.core import grid as grids
from csmooth.core.config import Settings, load_settings
from csmooth.core.constraints import ConstraintError
from csmooth.core.diagnostics import BoundViolationError
from csmooth.core.kernels import KernelError
from csmooth.core.qpsolver import QpSolverError
from csmooth.core.sampler import SamplerError
from csmooth.core.smoother import SmootherError
from csmooth.core.sweep_orchestrator import NuSweepResult, SweepOrchestratorError, converge
from csmooth.strategies import RefinementError

logger = logging.getLogger(__name__)

app = typer.Typer(
    name="csmooth",
    help="Constrained optimal smoothing on piecewise-linear knot spaces, with error-bound diagnostics.",
    no_args_is_help=True,
    add_completion=False,
)

ConfigOption = Annotated[
    Path | None, typer.Option("--config", help="TOML experiment config", dir_okay=False)
]
SeedOption = Annotated[
    int | None, typer.Option("--seed", help="Unsigned 64-bit seed (sampler.seed)", min=0)
]
OutOption = Annotated[Path | None, typer.Option("--out", help="Output directory (output.dir)")]
JitterOption = Annotated[
    bool, typer.Option("--jitter", help="Add 1e-10 * sigma2 to every Gram diagonal")
]
DataOption = Annotated[
    Path, typer.Option("--data", help="Observations CSV with header x,y", exists=True, dir_okay=False)
]

# Errors that end a command with exit code 1 and a one-line message
DOMAIN_ERRORS = (
    KernelError,
    grids.GridError,
    ConstraintError,
    QpSolverError,
    SamplerError,
    SmootherError,
    RefinementError,
    SweepOrchestratorError,
)


@app.callback()
def main(
    verbose: Annotated[bool, typer.Option("--verbose", "-v", help="Log at DEBUG level")] = False,
) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def _describe_validation(error: ValidationError) -> str:
    return "; ".join(
        f"{'.'.join(str(part) for part in e['loc']) or 'config'}: {e['msg']}"
        for e in error.errors()
    )


def _settings(
    config: Path | None,
    seed: int | None = None,
    jitter: bool = False,
    strategy: str | None = None,
) -> Settings:
    """Merge flags over the config; invalid input exits with code 2."""
    overrides: dict[str, Any] = {}
    if seed is not None:
        overrides["sampler"] = {"seed": seed}
    if jitter:
        overrides["kernel"] = {"jitter": True}
    if strategy is not None:
        overrides["refine"] = {"kind": strategy}
        overrides["sweep"] = {"strategies": [strategy]}
    try:
        return load_settings(config, **overrides)
    except ValidationError as e:
        typer.echo(f"Invalid configuration: {_describe_validation(e)}", err=True)
        raise typer.Exit(code=2)
    except FileNotFoundError as e:
        typer.echo(str(e), err=True)
        raise typer.Exit(code=2)


def _fail(error: Exception) -> typer.Exit:
    message = getattr(error, "message", None) or str(error)
    code = getattr(error, "error_code", None)
    typer.echo(f"Error{f' [{code}]' if code else ''}: {message}", err=True)
    return typer.Exit(code=1)


def _fit_at(settings: Settings, data: Path, n: int) -> smoother.MapSolution:
    obs = smoother.read_observations(data, settings.sampler.tau)
    domain = grids.DomainF.from_pairs(settings.refine.interval)
    grid = grids.equispaced_in(domain, n)
    return smoother.fit(
        settings.kernel.to_kernel(),
        grid,
        obs,
        settings.constraints.to_constraint_set(),
        jitter=settings.kernel.jitter,
    )


@app.command()
def sample(
    config: ConfigOption = None,
    seed: SeedOption = None,
    out: OutOption = None,
    jitter: JitterOption = False,
    count: Annotated[int, typer.Option("--count", help="Number of replicates", min=1)] = 1,
) -> None:
    """Draw constrained GP replicates and their noisy observations."""
    s = _settings(config, seed, jitter)
    out_dir = out or s.output.dir
    spec = sampler.ReplicateSpec(
        kernel=s.kernel.to_kernel(),
        cs=s.constraints.to_constraint_set(),
        grid=grids.equispaced(s.sampler.N),
        n_obs=s.sampler.n_obs,
        tau=s.sampler.tau,
        seed=s.sampler.seed,
        burn_in=s.sampler.burn_in,
        thin=s.sampler.thin,
        jitter=s.kernel.jitter,
    )
    try:
        replicates = sampler.sample_replicates(spec, count, workers=s.sweep.workers)
    except DOMAIN_ERRORS as e:
        raise _fail(e)
    for replicate in replicates:
        path_file, obs_file = sampler.to_csv(replicate, spec, out_dir)
        typer.echo(f"{path_file}\n{obs_file}")


@app.command()
def fit(
    data: DataOption,
    config: ConfigOption = None,
    out: OutOption = None,
    jitter: JitterOption = False,
) -> None:
    """Fit the constrained MAP on sampler.N equispaced knots of F and write map.csv."""
    s = _settings(config, jitter=jitter)
    try:
        solution = _fit_at(s, data, s.sampler.N)
    except DOMAIN_ERRORS as e:
        raise _fail(e)
    path = (out or s.output.dir) / "map.csv"
    smoother.to_csv(solution, path)
    typer.echo(
        f"{path}: N={solution.grid.N}, J={solution.objective:.6g}, "
        f"KKT residual={solution.qp.kkt_residual:.2e}"
    )


@app.command()
def diagnose(
    data: DataOption,
    config: ConfigOption = None,
    out: OutOption = None,
    jitter: JitterOption = False,
) -> None:
    """Fit at sampler.N and at sweep.N_ref, then write bound_report.json."""
    s = _settings(config, jitter=jitter)
    try:
        solution = _fit_at(s, data, s.sampler.N)
        problem = solution.problem
        reference = diagnostics.build_reference(
            problem.ctx.kernel,
            solution.grid.domain,
            problem.obs,
            problem.cs,
            s.sweep.N_ref,
            jitter=s.kernel.jitter,
        )
        report, _ = diagnostics.build_report(
            solution, reference, kernels.holder_params(problem.ctx.kernel)
        )
    except DOMAIN_ERRORS as e:
        raise _fail(e)

    out_dir = out or s.output.dir
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "bound_report.json"
    path.write_text(report.model_dump_json(indent=2) + "\n")
    typer.echo(
        f"{path}: sup_error={report.sup_error:.3e}, bound={report.bound_thm56:.3e}, "
        f"delta_N={report.delta_N:.3g}, alpha_N={report.alpha_N:.3e}"
    )
    try:
        diagnostics.check_report(report)
    except BoundViolationError as e:
        raise _fail(e)


@app.command("converge")
def converge_command(
    config: ConfigOption = None,
    seed: SeedOption = None,
    out: OutOption = None,
    strategy: Annotated[
        str | None,
        typer.Option(
            "--strategy",
            help="Refinement strategy; greedy_maxmod is an L2-change surrogate of MaxMod",
        ),
    ] = None,
    jitter: JitterOption = False,
) -> None:
    """Run the convergence sweep and write sweep.csv, failures.json and figures."""
    s = _settings(config, seed, jitter, strategy)
    try:
        result = converge(s, out)
    except DOMAIN_ERRORS as e:
        raise _fail(e)

    if isinstance(result, NuSweepResult):
        failures = sum(len(r.failures) for r in result.results.values())
        files = result.files
    else:
        failures = len(result.failures)
        files = result.files
    for path in files:
        typer.echo(str(path))
    if failures:
        typer.echo(f"{failures} replicate failure(s); see failures.json", err=True)


if __name__ == "__main__":
    app()
