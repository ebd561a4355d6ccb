from __future__ import annotations

from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

from app.core.config import settings
from app.schemas.decoding import DecoderConfig, ErrorType, PostProcessing, SiConfig

Outcome = Literal[
    "converged_success",
    "converged_logical_error",
    "post_success",
    "post_logical_error",
    "failure",
]

LOGICAL_ERROR_OUTCOMES = frozenset({"converged_logical_error", "post_logical_error", "failure"})

LER_CONVENTION = (
    "logical error rate counts converged_logical_error, post_logical_error and failure "
    "outcomes; a decoder returning no syndrome-valid estimate is never a success"
)


class ExperimentSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    code: str
    p: List[float]
    decoder: DecoderConfig = DecoderConfig()
    post: PostProcessing = "none"
    si: SiConfig = SiConfig()
    trials: int = Field(default=1000, ge=1)
    seed: int = Field(default_factory=lambda: settings.sim_seed, ge=0, lt=2**64)
    out: Optional[str] = None
    workers: int = Field(default_factory=lambda: settings.sim_workers, ge=1)
    early_stop_errors: int = Field(default_factory=lambda: settings.sim_early_stop_errors, ge=0)
    batch_size: int = Field(default=500, ge=1)
    error_type: ErrorType = "X"

    @field_validator("p")
    @classmethod
    def _check_grid(cls, value: List[float]) -> List[float]:
        if not value:
            raise ValueError("the p grid must be non-empty")
        if any(not 0 <= p < 1 for p in value):
            raise ValueError("every p must lie in [0, 1)")
        return value


class TrialRecord(BaseModel):
    trial: int
    p: float
    error_weight: int
    outcome: Outcome
    inactivations_used: Optional[int] = None
    iterations: int
    post_invoked: bool = False
    failure_reason: Optional[str] = None

    @property
    def is_logical_error(self) -> bool:
        return self.outcome in LOGICAL_ERROR_OUTCOMES


class PointStats(BaseModel):
    p: float
    eps: float
    trials: int
    logical_errors: int
    ler: float
    ci_lo: float
    ci_hi: float
    lambda_ave: Optional[float] = None
    post_invocations: int = 0
    mp_converged_frac: float
    mean_iterations: float
    total_iterations: int
    outcome_counts: Dict[str, int]
    failure_breakdown: Dict[str, int] = Field(default_factory=dict)
    early_stopped: bool = False


class ExperimentResult(BaseModel):
    code: str
    n: int
    k: int
    error_type: ErrorType
    decoder: DecoderConfig
    post: PostProcessing
    si: Optional[SiConfig] = None
    lambda_max: Optional[int] = None
    seed: int
    trials_per_point: int
    early_stop_errors: int
    convention: str = LER_CONVENTION
    points: List[PointStats]

    @property
    def post_label(self) -> str:
        if self.post == "si" and self.si is not None:
            return f"si[{self.lambda_max}]"
        return self.post


class HistogramBin(BaseModel):
    lo: int
    hi: int
    count: int


class RankHistogramRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    code: str
    p: float = Field(ge=0, lt=1)
    decoder: DecoderConfig = DecoderConfig(schedule="serial", max_iters=50)
    trials: int = Field(default=1000, ge=1)
    seed: int = Field(default_factory=lambda: settings.sim_seed, ge=0, lt=2**64)
    bin_width: int = Field(default=5, ge=1)


class RankHistogram(BaseModel):
    code: str
    p: float
    decoder: DecoderConfig
    trials: int
    failures: int
    m_x: int
    bin_width: int
    bins: List[HistogramBin]
    ranks: List[int]

    def mass_below(self, rank: int) -> float:
        if not self.ranks:
            return 0.0
        return sum(1 for r in self.ranks if r < rank) / len(self.ranks)


class SplittingRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    code: str
    p: List[float]
    decoder: DecoderConfig = DecoderConfig(algorithm="ms", schedule="flooding", max_iters=50)
    trials: int = Field(default=1000, ge=1)
    seed: int = Field(default_factory=lambda: settings.sim_seed, ge=0, lt=2**64)
    error_type: ErrorType = "X"

    @field_validator("p")
    @classmethod
    def _check_grid(cls, value: List[float]) -> List[float]:
        if not value:
            raise ValueError("the p grid must be non-empty")
        if any(not 0 <= p < 1 for p in value):
            raise ValueError("every p must lie in [0, 1)")
        return value


class SplittingPoint(BaseModel):
    p: float
    eps: float
    trials: int
    split_errors: int
    split_frac: float
    # Analytic curves: checks treated as independent, and the union bound.
    split_prob: float
    split_bound: float
    mp_failures: int
    logical_errors: int
    ler: float
    ci_lo: float
    ci_hi: float


class SplittingCurve(BaseModel):
    code: str
    n: int
    k: int
    error_type: ErrorType = "X"
    decoder: DecoderConfig
    seed: int
    trials_per_point: int
    even_checks: int
    points: List[SplittingPoint]


class SweepReport(BaseModel):
    p: List[float]
    results: List[ExperimentResult]
    rows: List[Dict[str, str]]
