from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator
from typing_extensions import Self

KernelFamily = Literal["matern", "squared_exponential"]
MonotoneDirection = Literal["increasing", "decreasing"]


# Covariance kernel parameters, shared by config, reports and CSV headers
class Kernel(BaseModel):
    model_config = ConfigDict(frozen=True)

    family: KernelFamily = "matern"
    sigma2: float = Field(default=1.0, gt=0)
    lengthscale: float = Field(default=0.4, gt=0)
    # Matérn smoothness; ignored for the squared exponential
    nu: float | None = Field(default=2.5, gt=0, le=10)

    @model_validator(mode="after")
    def _require_nu_for_matern(self) -> Self:
        if self.family == "matern" and self.nu is None:
            raise ValueError("Matérn kernels need a smoothness nu")
        return self


class HolderParams(BaseModel):
    """Hölder regularity of a kernel: |K(u,s) - K(u,t)| <= c_K |s - t|^beta."""

    model_config = ConfigDict(frozen=True)

    beta: float = Field(gt=0, le=1)
    c_K: float = Field(gt=0)
    # c_K comes from a dense-grid search, never from a closed form
    estimated: bool = True


class Bounds(BaseModel):
    model_config = ConfigDict(frozen=True)

    lower: float
    upper: float

    @model_validator(mode="after")
    def _check_order(self) -> Self:
        if not self.lower < self.upper:
            raise ValueError(
                f"bounds.lower ({self.lower}) must be < bounds.upper ({self.upper})"
            )
        return self


class ConstraintSet(BaseModel):
    """Declarative shape constraints: boundedness and/or monotonicity."""

    model_config = ConfigDict(frozen=True)

    bounds: Bounds | None = None
    monotone: MonotoneDirection | None = None

    @model_validator(mode="after")
    def _at_least_one(self) -> Self:
        if self.bounds is None and self.monotone is None:
            raise ValueError("a constraint set needs bounds, monotone, or both")
        return self

    def describe(self) -> str:
        parts = []
        if self.bounds is not None:
            parts.append(f"bounds[{self.bounds.lower}, {self.bounds.upper}]")
        if self.monotone is not None:
            parts.append(self.monotone)
        return "+".join(parts)


# Every quantity of the error bounds for one (replicate, N) pair
class BoundReport(BaseModel):
    N: int
    delta_N: float = Field(ge=0)
    beta: float
    c_K: float
    F_N: float = Field(ge=0)
    psi_bound: float = Field(ge=0)
    G_N: float = Field(ge=0)
    G_N_bound: float = Field(ge=0)
    alpha_N: float = Field(ge=0)
    c_embed: float = Field(ge=0)
    d1: float = Field(ge=0)
    d2: float = Field(ge=0)
    d3: float = Field(ge=0)
    d4: float = Field(ge=0)
    d5: float = Field(ge=0)
    d6: float = Field(ge=0)
    d7: float = Field(ge=0)
    d8: float = Field(ge=0)
    bound_thm55: float = Field(ge=0)
    bound_thm55_applicable: bool
    bound_thm56: float = Field(ge=0)
    sup_error: float = Field(ge=0)
    # Extra diagnostics of the error splitting
    E_hat_N: float
    inner_error: float = Field(ge=0)
    split_bound: float = Field(ge=0)
    epsilon_N: float
    epsilon_N_bound: float = Field(ge=0)
    eta_N: float
    eta_N_bound: float = Field(ge=0)
    convexity_gap: float
    holder_ratio: float = Field(ge=0)
    labels: dict[str, str] = Field(default_factory=dict)


class SweepRow(BaseModel):
    replicate_id: int
    strategy: str
    N: int
    delta_N: float
    sup_error: float
    G_N: float
    alpha_est: float
    bound56: float
    objective: float
    kkt_residual: float
    wall_time_ms: float = 0.0


class ReplicateFailure(BaseModel):
    replicate_id: int
    strategy: str
    stage: str
    error: str
    error_code: str | None = None
