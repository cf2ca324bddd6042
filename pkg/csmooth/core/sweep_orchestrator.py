"""
SweepOrchestrator - Runs convergence sweeps over replicates and strategies.

For each replicate the orchestrator:
- Samples a constrained GP path and corrupts it with Gaussian noise
- Fits the N_ref reference that stands in for the infinite-dimensional MAP
- Runs every configured refinement strategy from N0 to Nmax, recording a
  BoundReport and a SweepRow at each scheduled N

Failures are recorded per replicate (and per strategy) and the sweep carries
on with the rest. Results are written as sweep.csv, failures.json and one
SVG boxplot per strategy; regularity sweeps over Matérn nu add nu_slopes.csv.
"""

import json
import logging
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from csmooth import strategies, utils
from csmooth.core import diagnostics, kernels, sampler, smoother
from csmooth.core import grid as grids
from csmooth.core.config import RefineSettings, SamplerSettings, Settings
from csmooth.core.diagnostics import ReferenceFit
from csmooth.core.grid import DomainF
from csmooth.core.smoother import MapSolution, Observations
from csmooth.models import (
    BoundReport,
    ConstraintSet,
    HolderParams,
    Kernel,
    ReplicateFailure,
    SweepRow,
)
from csmooth.strategies import RefinementContext

logger = logging.getLogger(__name__)

SWEEP_HEADER = [
    "replicate_id",
    "strategy",
    "N",
    "delta_N",
    "sup_error",
    "G_N",
    "alpha_est",
    "bound56",
    "objective",
    "kkt_residual",
    "wall_time_ms",
]
NU_SLOPES_HEADER = ["nu", "strategy", "points", "slope_vs_delta", "slope_vs_N"]

# Figure geometry in SVG user units
FIGURE_WIDTH, FIGURE_HEIGHT = 720, 420
MARGIN_LEFT, MARGIN_RIGHT, MARGIN_TOP, MARGIN_BOTTOM = 64, 24, 32, 44


class SweepOrchestratorError(Exception):
    """Base exception for sweep orchestrator errors."""

    def __init__(self, message: str, error_code: str | None = None):
        self.message = message
        self.error_code = error_code
        super().__init__(self.message)


@dataclass(frozen=True)
class ReplicateJob:
    """Everything one worker needs for one replicate; pickles into subprocesses."""

    replicate_id: int
    seed: int
    kernel: Kernel
    hparams: HolderParams
    cs: ConstraintSet
    domain: DomainF
    strategies: tuple[str, ...]
    sampler: SamplerSettings
    refine: RefineSettings
    n_ref: int
    jitter: bool = False
    record_wall_time: bool = False


@dataclass
class ReplicateOutcome:
    replicate_id: int
    rows: list[SweepRow] = field(default_factory=list)
    reports: list[tuple[str, BoundReport]] = field(default_factory=list)
    failures: list[ReplicateFailure] = field(default_factory=list)

    def fail(self, strategy: str, stage: str, error: Exception) -> None:
        message = getattr(error, "message", None) or str(error)
        logger.error(
            f"Replicate {self.replicate_id} failed at {stage} ({strategy}): {message}",
            exc_info=True,
        )
        self.failures.append(
            ReplicateFailure(
                replicate_id=self.replicate_id,
                strategy=strategy,
                stage=stage,
                error=message,
                error_code=getattr(error, "error_code", None),
            )
        )


@dataclass
class SweepResult:
    rows: list[SweepRow]
    failures: list[ReplicateFailure]
    reports: dict[tuple[int, str, int], BoundReport]
    strategies: list[str]
    nu: float | None = None
    files: list[Path] = field(default_factory=list)

    def column(self, strategy: str, name: str) -> dict[int, list[float]]:
        """Values of one numeric column grouped by N for one strategy."""
        grouped: dict[int, list[float]] = defaultdict(list)
        for row in self.rows:
            if row.strategy == strategy:
                grouped[row.N].append(float(getattr(row, name)))
        return dict(sorted(grouped.items()))

    def medians(self, strategy: str, name: str = "sup_error") -> dict[int, float]:
        return {n: float(np.median(v)) for n, v in self.column(strategy, name).items()}


@dataclass(frozen=True)
class NuSlope:
    nu: float
    strategy: str
    points: int
    slope_vs_delta: float
    slope_vs_N: float


@dataclass
class NuSweepResult:
    results: dict[float, SweepResult]
    slopes: list[NuSlope]
    files: list[Path] = field(default_factory=list)


# =============================================================================
# Per-replicate work (runs inside worker processes)
# =============================================================================


def strategy_rng(seed: int) -> np.random.Generator:
    """Third spawned stream of a replicate seed; the first two drive sampling."""
    return np.random.default_rng(np.random.SeedSequence(seed).spawn(3)[2])


def refine_and_record(
    job: ReplicateJob,
    name: str,
    obs: Observations,
    reference: ReferenceFit,
    outcome: ReplicateOutcome,
) -> MapSolution:
    """
    Refine from N0 to Nmax with one strategy, appending a row at every scheduled N.

    Returns:
        The final fit on Nmax knots
    """
    strategy = strategies.get_strategy(name)(job.refine.N0, job.refine.Nmax, job.domain)
    ctx = RefinementContext(
        kernel=job.kernel,
        obs=obs,
        cs=job.cs,
        jitter=job.jitter,
        max_candidates=job.refine.max_candidates,
        rng=strategy_rng(job.seed),
    )
    recorded = set(job.refine.recorded())
    labels = {"strategy": name}
    if strategy.label:
        labels["refinement"] = strategy.label

    start = time.perf_counter()
    current = strategy.initial_grid(ctx)
    fit: MapSolution | None = None
    warm = None
    while True:
        if fit is None:
            fit = smoother.fit(job.kernel, current, obs, job.cs, jitter=job.jitter, warm_keys=warm)
        if current.N in recorded:
            report, _ = diagnostics.build_report(fit, reference, job.hparams, labels)
            wall_ms = (time.perf_counter() - start) * 1e3 if job.record_wall_time else 0.0
            outcome.rows.append(
                SweepRow(
                    replicate_id=job.replicate_id,
                    strategy=name,
                    N=current.N,
                    delta_N=report.delta_N,
                    sup_error=report.sup_error,
                    G_N=report.G_N,
                    alpha_est=report.alpha_N,
                    bound56=report.bound_thm56,
                    objective=fit.objective,
                    kkt_residual=fit.qp.kkt_residual,
                    wall_time_ms=wall_ms,
                )
            )
            outcome.reports.append((name, report))
            try:
                diagnostics.check_report(report)
            except diagnostics.BoundViolationError as e:
                # The row stays in the CSV; the violation is surfaced as a failure
                outcome.fail(name, "bound", e)
        if current.N >= strategy.Nmax:
            return fit
        step = strategy.refine_step(current, fit, ctx)
        warm = fit.active_keys
        current, fit = step.grid, step.fit


def run_replicate(job: ReplicateJob) -> ReplicateOutcome:
    """
    Sample, corrupt, fit the reference and run every strategy for one replicate.

    Never raises: each failing stage is recorded in the outcome.
    """
    outcome = ReplicateOutcome(job.replicate_id)
    every = ",".join(job.strategies)
    try:
        spec = sampler.ReplicateSpec(
            kernel=job.kernel,
            cs=job.cs,
            grid=grids.equispaced(job.sampler.N),
            n_obs=job.sampler.n_obs,
            tau=job.sampler.tau,
            seed=job.seed,
            burn_in=job.sampler.burn_in,
            thin=job.sampler.thin,
            jitter=job.jitter,
        )
        replicate = sampler.generate_replicate(spec, job.replicate_id)
    except Exception as e:
        outcome.fail(every, "sample", e)
        return outcome

    try:
        reference = diagnostics.build_reference(
            job.kernel, job.domain, replicate.obs, job.cs, job.n_ref, jitter=job.jitter
        )
    except Exception as e:
        outcome.fail(every, "reference", e)
        return outcome

    for name in job.strategies:
        try:
            final = refine_and_record(job, name, replicate.obs, reference, outcome)
            logger.info(
                f"Replicate {job.replicate_id} [{name}]: N={final.grid.N}, "
                f"J={final.objective:.6g}, KKT={final.qp.kkt_residual:.2e}"
            )
        except Exception as e:
            outcome.fail(name, "refine", e)
    return outcome


# =============================================================================
# Figures and files
# =============================================================================


def _scale(value: float, lo: float, hi: float, start: float, stop: float) -> float:
    if hi <= lo:
        return 0.5 * (start + stop)
    return start + (value - lo) / (hi - lo) * (stop - start)


def boxplot_svg(result: SweepResult, strategy: str, title: str) -> str:
    """
    Boxplots of log10(sup_error) per recorded N, with median log10(delta_N) overlaid.

    The data table behind the figure is embedded as CSV text in <metadata>.
    """
    errors = result.column(strategy, "sup_error")
    deltas = result.medians(strategy, "delta_N")
    if not errors:
        raise SweepOrchestratorError(f"No rows for strategy '{strategy}'", "NO_DATA")

    tiny = np.finfo(np.float64).tiny
    stats = {
        n: np.percentile(np.log10(np.maximum(values, tiny)), [0, 25, 50, 75, 100])
        for n, values in errors.items()
    }
    log_deltas = {n: float(np.log10(max(d, tiny))) for n, d in deltas.items()}
    values = [float(v) for s in stats.values() for v in s] + list(log_deltas.values())
    y_lo, y_hi = float(np.floor(min(values))), float(np.ceil(max(values)))
    if y_hi <= y_lo:
        y_hi = y_lo + 1.0

    left, right = MARGIN_LEFT, FIGURE_WIDTH - MARGIN_RIGHT
    top, bottom = MARGIN_TOP, FIGURE_HEIGHT - MARGIN_BOTTOM
    log_n = {n: float(np.log10(n)) for n in stats}
    x_lo, x_hi = min(log_n.values()), max(log_n.values())
    pad = 0.04 * (x_hi - x_lo) if x_hi > x_lo else 1.0

    def x_of(n: int) -> float:
        return _scale(log_n[n], x_lo - pad, x_hi + pad, left, right)

    def y_of(v: float) -> float:
        return _scale(v, y_lo, y_hi, bottom, top)

    half = min(12.0, 0.3 * (right - left) / max(len(stats), 1))
    boxes = [
        {
            "N": n,
            "x": round(x_of(n), 2),
            "half": round(half, 2),
            "min_y": round(y_of(s[0]), 2),
            "q1_y": round(y_of(s[1]), 2),
            "median_y": round(y_of(s[2]), 2),
            "q3_y": round(y_of(s[3]), 2),
            "max_y": round(y_of(s[4]), 2),
        }
        for n, s in stats.items()
    ]
    delta_points = " ".join(f"{x_of(n):.2f},{y_of(v):.2f}" for n, v in log_deltas.items())
    yticks = [
        {"y": round(y_of(v), 2), "label": f"1e{int(v)}"}
        for v in np.arange(y_lo, y_hi + 0.5, 1.0)
    ]
    xticks = [{"x": round(x_of(n), 2), "label": str(n)} for n in stats]

    table_lines = ["N,count,min,q1,median,q3,max,median_delta_N"]
    for n, s in stats.items():
        cells = [10.0 ** float(v) for v in s] + [deltas[n]]
        table_lines.append(
            ",".join([str(n), str(len(errors[n]))] + [utils.format_value(c) for c in cells])
        )

    return utils.render_svg_template(
        template_name="boxplot.svg.j2",
        context={
            "title": title,
            "width": FIGURE_WIDTH,
            "height": FIGURE_HEIGHT,
            "left": left,
            "right": right,
            "top": top,
            "bottom": bottom,
            "boxes": boxes,
            "delta_points": delta_points,
            "xticks": xticks,
            "yticks": yticks,
            "ylabel": "log10 sup error",
            "series_label": "log10 sup_error",
            "table": "\n".join(table_lines),
        },
    )


def fit_slopes(result: SweepResult, strategy: str) -> tuple[int, float, float]:
    """
    Least-squares slopes of log(median sup_error) against log(median delta_N) and log(N).

    Returns:
        (number of points used, slope vs delta_N, slope vs N); slopes are nan
        with fewer than two usable points
    """
    errors = result.medians(strategy, "sup_error")
    deltas = result.medians(strategy, "delta_N")
    ns = [n for n in errors if errors[n] > 0 and deltas.get(n, 0.0) > 0]
    if len(ns) < 2:
        return len(ns), float("nan"), float("nan")
    log_err = np.log([errors[n] for n in ns])
    slope_delta = float(np.polyfit(np.log([deltas[n] for n in ns]), log_err, 1)[0])
    slope_n = float(np.polyfit(np.log(ns), log_err, 1)[0])
    return len(ns), slope_delta, slope_n


class SweepOrchestrator:
    """
    Runs convergence sweeps described by a Settings object.

    Example:
        >>> orchestrator = SweepOrchestrator(load_settings(Path("configs/dense.toml")))
        >>> result = orchestrator.converge()
        >>> result.medians("greedy_maxmod")[250]
    """

    def __init__(self, settings: Settings, out_dir: Path | None = None) -> None:
        self.settings = settings
        self.out_dir = out_dir or settings.output.dir
        self.cs = settings.constraints.to_constraint_set()
        self.domain = DomainF.from_pairs(settings.refine.interval)
        logger.info(
            f"SweepOrchestrator initialized: strategies={settings.strategies}, "
            f"replicates={settings.sweep.replicates}, F={self.domain.to_list()}"
        )

    def jobs(self, kernel: Kernel) -> list[ReplicateJob]:
        s = self.settings
        hparams = kernels.holder_params(kernel)
        seeds = sampler.replicate_seeds(s.sampler.seed, s.sweep.replicates)
        return [
            ReplicateJob(
                replicate_id=i,
                seed=seed,
                kernel=kernel,
                hparams=hparams,
                cs=self.cs,
                domain=self.domain,
                strategies=tuple(s.strategies),
                sampler=s.sampler,
                refine=s.refine,
                n_ref=s.sweep.N_ref,
                jitter=s.kernel.jitter,
                record_wall_time=s.output.record_wall_time,
            )
            for i, seed in enumerate(seeds)
        ]

    def run(self, kernel: Kernel | None = None, nu: float | None = None) -> SweepResult:
        """
        Run every replicate for one kernel without writing files.

        Raises:
            SweepOrchestratorError: If the worker pool itself fails
        """
        kernel = kernel or self.settings.kernel.to_kernel()
        jobs = self.jobs(kernel)
        workers = self.settings.sweep.workers
        logger.info(f"Running {len(jobs)} replicates on {workers} worker(s), kernel={kernel}")
        try:
            if workers <= 1:
                outcomes = [run_replicate(job) for job in jobs]
            else:
                with ProcessPoolExecutor(max_workers=workers) as pool:
                    outcomes = list(pool.map(run_replicate, jobs))
        except Exception as e:
            error_msg = f"Unexpected error running sweep: {e}"
            logger.error(error_msg, exc_info=True)
            raise SweepOrchestratorError(message=error_msg)

        rows = sorted(
            (row for o in outcomes for row in o.rows),
            key=lambda r: (r.replicate_id, r.strategy, r.N),
        )
        failures = sorted(
            (f for o in outcomes for f in o.failures),
            key=lambda f: (f.replicate_id, f.strategy, f.stage),
        )
        reports = {
            (o.replicate_id, name, report.N): report
            for o in outcomes
            for name, report in o.reports
        }
        logger.info(f"Sweep complete: {len(rows)} rows, {len(failures)} failures")
        return SweepResult(
            rows=rows,
            failures=failures,
            reports=reports,
            strategies=list(self.settings.strategies),
            nu=nu,
        )

    def metadata(self, kernel: Kernel) -> dict[str, Any]:
        s = self.settings
        labels = {}
        for name in s.strategies:
            label = strategies.get_strategy(name).label
            if label:
                labels[name] = label
        return {
            "kernel": kernel.model_dump(),
            "constraints": self.cs.model_dump(),
            "domain": self.domain.to_list(),
            "seed": s.sampler.seed,
            "replicates": s.sweep.replicates,
            "N_ref": s.sweep.N_ref,
            "N0": s.refine.N0,
            "Nmax": s.refine.Nmax,
            "strategies": list(s.strategies),
            "refinement_labels": labels,
            "u_F": "reference fit on N_ref knots",
            "alpha_est": "fine-grid estimate",
        }

    def write(self, result: SweepResult, kernel: Kernel, out_dir: Path) -> list[Path]:
        """Write sweep.csv, failures.json and (optionally) one boxplot per strategy."""
        files = [
            utils.write_csv(
                out_dir / "sweep.csv",
                SWEEP_HEADER,
                ([getattr(row, column) for column in SWEEP_HEADER] for row in result.rows),
                metadata_json=json.dumps(self.metadata(kernel), sort_keys=True),
            )
        ]
        failures_path = out_dir / "failures.json"
        failures_path.write_text(
            json.dumps([f.model_dump() for f in result.failures], indent=2) + "\n"
        )
        files.append(failures_path)

        if self.settings.output.plots:
            for name in result.strategies:
                if not any(row.strategy == name for row in result.rows):
                    logger.warning(f"No rows for strategy {name}; skipping its figure")
                    continue
                title = f"{name}: log10 sup error vs N ({self.cs.describe()})"
                if result.nu is not None:
                    title += f", nu = {result.nu:g}"
                svg_path = out_dir / f"{name}_boxplot.svg"
                svg_path.write_text(boxplot_svg(result, name, title))
                files.append(svg_path)
        logger.info(f"Wrote {len(files)} files to {out_dir}")
        return files

    def converge(self) -> SweepResult:
        """Run the sweep for the configured kernel and write its files."""
        kernel = self.settings.kernel.to_kernel()
        result = self.run(kernel)
        result.files = self.write(result, kernel, self.out_dir)
        return result

    def converge_nu(self) -> NuSweepResult:
        """
        Regularity sweep: one full sweep per Matérn nu in sweep.nu_values.

        Each nu writes its files under <out>/nu_<nu>/; nu_slopes.csv at the top
        holds the fitted log-log slopes per (nu, strategy).
        """
        nu_values = self.settings.sweep.nu_values
        if not nu_values:
            raise SweepOrchestratorError("sweep.nu_values is empty", "INVALID_CONFIG")
        if self.settings.kernel.family != "matern":
            raise SweepOrchestratorError("nu sweeps need a Matérn kernel", "INVALID_CONFIG")

        results: dict[float, SweepResult] = {}
        slopes: list[NuSlope] = []
        files: list[Path] = []
        for nu in nu_values:
            kernel = self.settings.kernel.to_kernel(nu)
            result = self.run(kernel, nu=nu)
            result.files = self.write(result, kernel, self.out_dir / f"nu_{nu:g}")
            files += result.files
            results[nu] = result
            for name in result.strategies:
                points, slope_delta, slope_n = fit_slopes(result, name)
                slopes.append(NuSlope(nu, name, points, slope_delta, slope_n))
                logger.info(
                    f"nu={nu:g} [{name}]: slope vs delta_N = {slope_delta:.4f}, "
                    f"slope vs N = {slope_n:.4f} over {points} points"
                )

        files.append(
            utils.write_csv(
                self.out_dir / "nu_slopes.csv",
                NU_SLOPES_HEADER,
                ([s.nu, s.strategy, s.points, s.slope_vs_delta, s.slope_vs_N] for s in slopes),
            )
        )
        return NuSweepResult(results=results, slopes=slopes, files=files)


def converge(settings: Settings, out_dir: Path | None = None) -> SweepResult | NuSweepResult:
    """
    Full convergence sweep; a non-empty sweep.nu_values runs the regularity sweep.

    Example:
        >>> result = converge(load_settings(Path("configs/dense.toml")), Path("out"))
    """
    orchestrator = SweepOrchestrator(settings, out_dir)
    if settings.sweep.nu_values:
        return orchestrator.converge_nu()
    return orchestrator.converge()
