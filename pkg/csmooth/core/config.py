from pathlib import Path
from typing import Literal

from pydantic import BaseModel, Field, model_validator
from pydantic_settings import (
    BaseSettings,
    PydanticBaseSettingsSource,
    SettingsConfigDict,
    TomlConfigSettingsSource,
)
from typing_extensions import Self

from csmooth.models import (
    Bounds,
    ConstraintSet,
    Kernel,
    KernelFamily,
    MonotoneDirection,
)

StrategyName = Literal["equispaced", "greedy_maxmod", "rejection_interval"]

# Geometric recording schedule, plus N = 10 used by the trend checks
DEFAULT_SCHEDULE = [2, 3, 5, 8, 10, 12, 18, 27, 40, 60, 90, 135, 200, 250]


class KernelSettings(BaseModel):
    family: KernelFamily = "matern"
    sigma2: float = Field(default=1.0, gt=0)
    lengthscale: float = Field(default=0.4, gt=0)
    nu: float | None = Field(default=2.5, gt=0, le=10)
    # Opt-in diagonal jitter of 1e-10 * sigma2 on every Gram matrix
    jitter: bool = False

    def to_kernel(self, nu: float | None = None) -> Kernel:
        return Kernel(
            family=self.family,
            sigma2=self.sigma2,
            lengthscale=self.lengthscale,
            nu=self.nu if nu is None else nu,
        )


class BoundsSettings(BaseModel):
    lower: float = 0.0
    upper: float = 1.0


class ConstraintSettings(BaseModel):
    bounds: BoundsSettings | None = Field(default_factory=BoundsSettings)
    monotone: MonotoneDirection | None = None

    def to_constraint_set(self) -> ConstraintSet:
        bounds = None
        if self.bounds is not None:
            bounds = Bounds(lower=self.bounds.lower, upper=self.bounds.upper)
        return ConstraintSet(bounds=bounds, monotone=self.monotone)


class SamplerSettings(BaseModel):
    N: int = Field(default=200, ge=2)
    tau: float = Field(default=0.05, gt=0)
    # Not a published value: observation count and design are a config default
    n_obs: int = Field(default=50, ge=0)
    seed: int = Field(default=0, ge=0, lt=2**64)
    burn_in: int = Field(default=500, ge=0)
    thin: int = Field(default=10, ge=1)


class RefineSettings(BaseModel):
    kind: StrategyName = "greedy_maxmod"
    N0: int = Field(default=2, ge=2)
    Nmax: int = Field(default=250, ge=2)
    # Union of closed intervals, e.g. [[0.0, 0.3], [0.6, 1.0]]
    interval: list[tuple[float, float]] | None = None
    # Gap midpoints scored per greedy step; 0 scores all of them
    max_candidates: int = Field(default=24, ge=0)
    schedule: list[int] = Field(default_factory=lambda: list(DEFAULT_SCHEDULE))

    @model_validator(mode="after")
    def _check_budget(self) -> Self:
        if self.Nmax < self.N0:
            raise ValueError(f"refine.Nmax ({self.Nmax}) must be >= refine.N0 ({self.N0})")
        if self.kind == "rejection_interval" and not self.interval:
            raise ValueError("refine.interval is required for rejection_interval")
        return self

    def recorded(self) -> list[int]:
        """Schedule entries reachable within [N0, Nmax], always ending at Nmax."""
        points = sorted({n for n in self.schedule if self.N0 <= n <= self.Nmax})
        if not points or points[-1] != self.Nmax:
            points.append(self.Nmax)
        return points


class SweepSettings(BaseModel):
    replicates: int = Field(default=20, ge=1)
    N_ref: int = Field(default=1000, ge=2)
    workers: int = Field(default=1, ge=1)
    # Empty means [refine.kind]
    strategies: list[StrategyName] = Field(default_factory=list)
    # Non-empty turns the sweep into a regularity sweep over Matérn nu
    nu_values: list[float] = Field(default_factory=list)


class OutputSettings(BaseModel):
    dir: Path = Path("out")
    # Wall time breaks byte-identical reruns, so it is off by default
    record_wall_time: bool = False
    plots: bool = True


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="CSMOOTH_",
        env_nested_delimiter="__",
        env_ignore_empty=True,
        extra="ignore",
    )

    kernel: KernelSettings = Field(default_factory=KernelSettings)
    constraints: ConstraintSettings = Field(default_factory=ConstraintSettings)
    sampler: SamplerSettings = Field(default_factory=SamplerSettings)
    refine: RefineSettings = Field(default_factory=RefineSettings)
    sweep: SweepSettings = Field(default_factory=SweepSettings)
    output: OutputSettings = Field(default_factory=OutputSettings)

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        return (init_settings, env_settings, TomlConfigSettingsSource(settings_cls))

    @model_validator(mode="after")
    def _check_constraints(self) -> Self:
        # Raises when neither bounds nor monotonicity is configured
        self.constraints.to_constraint_set()
        return self

    @model_validator(mode="after")
    def _check_interval(self) -> Self:
        interval = self.refine.interval
        if interval:
            if interval[0][0] != 0.0 or interval[-1][1] != 1.0:
                raise ValueError("refine.interval must start at 0 and end at 1")
            for lo, hi in interval:
                if not 0.0 <= lo <= hi <= 1.0:
                    raise ValueError(f"refine.interval piece [{lo}, {hi}] is not inside [0, 1]")
        return self

    @property
    def strategies(self) -> list[StrategyName]:
        return list(self.sweep.strategies) or [self.refine.kind]


def load_settings(config_path: Path | None = None, **overrides: object) -> Settings:
    """
    Build Settings from an optional TOML file, the environment and overrides.

    Priority, highest first: overrides > CSMOOTH_* environment > TOML file > defaults.

    Raises:
        FileNotFoundError: If config_path does not exist
        pydantic.ValidationError: If the merged configuration is invalid
    """
    if config_path is None:
        return Settings(**overrides)  # type: ignore[arg-type]
    if not config_path.is_file():
        raise FileNotFoundError(f"Config file not found: {config_path}")

    class FileSettings(Settings):
        model_config = SettingsConfigDict(toml_file=config_path)

    loaded = FileSettings(**overrides)  # type: ignore[arg-type]
    # Plain Settings so that the result pickles into worker processes
    return Settings.model_construct(**dict(loaded))
