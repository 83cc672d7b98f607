import math
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

REPORT_SCHEMA_VERSION = 1

EtaMode = Literal["one_sided", "two_sided", "constant", "geometric"]
Verdict = Literal["pass", "fail", "inconclusive"]


class AppConfig(BaseModel):
    """Application configuration loaded from environment variables."""

    worker_count: int | None = Field(
        default=None, description="Worker pool size overriding the run config."
    )
    output_dir: str | None = Field(
        default=None, description="Artifact folder overriding the run config."
    )
    log_level: str = Field(default="INFO", description="Logging level name.")

    @field_validator("worker_count")
    def validate_worker_count(cls, value: int | None) -> int | None:
        """Worker count must be positive when set."""
        if value is not None and value < 1:
            raise ValueError("SKEWWALK_WORKERS must be a positive integer.")
        return value

    @field_validator("log_level")
    def validate_log_level(cls, value: str) -> str:
        value = value.upper()
        if value not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            raise ValueError(f"Unknown log level {value!r}.")
        return value


class QuadratureSpec(BaseModel):
    """Tolerances shared by every quadrature in the transforms module."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    abs_tol: float = Field(default=1e-9, gt=0, description="Absolute tolerance.")
    rel_tol: float = Field(default=1e-8, gt=0, description="Relative tolerance.")
    max_subdivisions: int = Field(
        default=1000, ge=50, description="Subinterval limit handed to QUADPACK."
    )
    tail_split: float = Field(
        default=50.0,
        gt=0,
        description="Split point A between the finite panel and the oscillatory tail.",
    )


class TransformResult(BaseModel):
    """A transform value together with its quadrature error estimate."""

    model_config = ConfigDict(frozen=True)

    value: float
    err_estimate: float = Field(ge=0)
    n_evals: int = Field(default=0, ge=0)
    method: str = "quadrature"

    @field_validator("value")
    def validate_value(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("Transform value must be finite.")
        return value


class XiLawConfig(BaseModel):
    """Law block for the symmetric lattice step distribution."""

    model_config = ConfigDict(extra="forbid")

    alpha: float = Field(default=1.5, gt=1, lt=2, description="Tail index of the steps.")
    tail_constant: float | None = Field(
        default=None,
        gt=0,
        description="C in P{xi=+-k} = C k^-(1+alpha); defaults to a quarter.",
    )


class EtaLawConfig(BaseModel):
    """Law block for the jump from zero."""

    model_config = ConfigDict(extra="forbid")

    eta_mode: EtaMode = Field(default="one_sided", description="Perturbation family.")
    beta: float | None = Field(
        default=0.3, gt=0, lt=1, description="Tail index in heavy-tail modes."
    )
    tail_constant: float | None = Field(
        default=None, gt=0, description="Overrides the normalising constant."
    )
    c_plus: float = Field(
        default=1.0, ge=0, le=1, description="Share of mass on the positive side."
    )
    constant_value: int = Field(default=1, description="Value of eta in constant mode.")
    geometric_p: float = Field(
        default=0.5, gt=0, le=1, description="Success probability in geometric mode."
    )

    @model_validator(mode="after")
    def validate_mode(self) -> "EtaLawConfig":
        if self.eta_mode in ("one_sided", "two_sided") and self.beta is None:
            raise ValueError(f"beta must be set when eta_mode is {self.eta_mode}.")
        if self.eta_mode == "constant" and self.constant_value == 0:
            raise ValueError("constant_value must be nonzero (P{eta=0} < 1).")
        return self


class GridConfig(BaseModel):
    """Parameter grids swept by transforms and experiments."""

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    x: list[float] = Field(default_factory=lambda: [-5.0, -1.0, -0.1, 0.0, 0.1, 1.0, 5.0])
    v: list[float] = Field(default_factory=lambda: [1e2, 1e4, 1e6])
    lam: list[float] = Field(default_factory=lambda: [1.0], alias="lambda")
    s: list[float] = Field(default_factory=lambda: [0.5, 0.9])
    n: list[int] = Field(default_factory=lambda: [1000, 10000, 100000])
    u: list[float] = Field(default_factory=lambda: [1e3, 1e4, 1e5, 1e6])
    t: list[float] = Field(default_factory=lambda: [1.0])
    theta: list[float] = Field(default_factory=lambda: [0.5, 1.0, 2.0, 5.0])
    A: list[float] = Field(default_factory=lambda: [5.0, 10.0, 20.0, 40.0])


class ParameterConfig(BaseModel):
    """Scalar parameters of a run."""

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    lam: float = Field(default=1.0, gt=0, alias="lambda", description="Laplace variable lambda.")
    rho: float = Field(default=1.0, gt=0, description="Poisson clock intensity.")
    t0: float = Field(default=1.0, gt=0, description="Time horizon.")
    delta: float | None = Field(default=None, gt=0, description="Slack exponent.")
    n0: int = Field(default=1, description="Restart point of the renewal experiment.")
    n_paths: int = Field(default=500, ge=1)
    n_steps: int = Field(default=10_000, ge=1)
    x0: int = Field(default=0, description="Start of simulated paths.")
    v_proxy: float = Field(default=1e6, ge=1, description="Proxy scale for V f.")
    step_budget: float = Field(default=1e8, gt=0, description="Total simulated steps cap.")
    test_functions: list[str] = Field(default_factory=lambda: ["gaussian", "compact"])

    @field_validator("n0")
    def validate_n0(cls, value: int) -> int:
        if value == 0:
            raise ValueError("n0 must be nonzero.")
        return value


class RunConfig(BaseModel):
    """A complete, serialisable description of one run."""

    model_config = ConfigDict(extra="forbid")

    xi: XiLawConfig = Field(default_factory=XiLawConfig)
    eta: EtaLawConfig = Field(default_factory=EtaLawConfig)
    operation: Literal["simulate", "transform", "resolvent", "experiment"] = "experiment"
    experiment: str | None = Field(default=None, description="Experiment name.")
    grids: GridConfig = Field(default_factory=GridConfig)
    parameters: ParameterConfig = Field(default_factory=ParameterConfig)
    quadrature: QuadratureSpec = Field(default_factory=QuadratureSpec)
    seed: int = Field(default=20240601, ge=0, lt=2**64)
    output_dir: str = Field(default="results")
    worker_count: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def validate_experiment(self) -> "RunConfig":
        if self.operation == "experiment" and not self.experiment:
            raise ValueError("experiment must be named when operation is experiment.")
        return self


class GridPoint(BaseModel):
    """One evaluated point of an experiment grid."""

    params: dict[str, float | int | str]
    value: float | None = None
    err: float | None = None
    status: Literal["ok", "inconclusive"] = "ok"
    note: str | None = None


class ExperimentReport(BaseModel):
    """Structured outcome of one convergence experiment."""

    schema_version: int = REPORT_SCHEMA_VERSION
    id: str
    config: dict = Field(default_factory=dict)
    grid: list[GridPoint] = Field(default_factory=list)
    verdict: Verdict
    criteria: list[str] = Field(
        default_factory=list, description="Numeric criteria backing the verdict."
    )
    headline: dict[str, float | None] = Field(default_factory=dict)
    seeds: list[int] = Field(default_factory=list)
    runtime_s: float = 0.0
    timestamp: str | None = None

    def __repr__(self):
        return f"ExperimentReport(id={self.id}, verdict={self.verdict}, points={len(self.grid)}, seeds={self.seeds})"

    def __str__(self):
        lines = [f"Experiment: {self.id}", f"Verdict: {self.verdict}"]
        lines.extend(f"Criterion: {c}" for c in self.criteria)
        return "\n".join(lines)

    def __pretty_dict__(self):
        row: dict[str, float | str | None] = {
            "Experiment": self.id,
            "Verdict": self.verdict,
            "Points": len(self.grid),
            "Inconclusive": sum(p.status == "inconclusive" for p in self.grid),
        }
        row.update(self.headline)
        return row
