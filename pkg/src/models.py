from datetime import datetime
from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field, model_validator


class Activation(str, Enum):
    """Elementwise layer activations"""
    IDENTITY = "identity"
    TANH = "tanh"
    RELU = "relu"
    SIGMOID = "sigmoid"
    SOFTPLUS = "softplus"


class FeatureKind(str, Enum):
    """Feature maps that can sit on top of a generator"""
    IDENTITY = "identity"
    LOGISTIC_REGRESSION = "logistic_regression"


class MetricVariant(str, Enum):
    """Pull-back metric families"""
    DETERMINISTIC = "deterministic"
    STOCHASTIC = "stochastic"
    FEATURE_DET = "feature_det"
    FEATURE_STOCH = "feature_stoch"
    CONFORMAL = "conformal"


class GradientMode(str, Enum):
    """How energy gradients w.r.t. control points are obtained"""
    EXACT_VJP = "exact_vjp"
    FINITE_DIFFERENCE = "finite_difference"


class FieldKind(str, Enum):
    """Scalar diagnostics of the metric over a 2D window"""
    LOG_CONDITION = "log_condition"
    LOG_SQRT_DET = "log_sqrt_det"


class StreamKind(str, Enum):
    """Which extreme eigenvector a streamline follows"""
    MIN_EIG = "min_eig"
    MAX_EIG = "max_eig"


class JobStatus(str, Enum):
    """Outcome of one coordinated job"""
    SUCCESS = "success"
    ERROR = "error"


class TrainConfig(BaseModel):
    """Knobs for the desk-scale trainers"""
    epochs: int = Field(default=20, gt=0)
    variance_epochs: int = Field(default=5, ge=0)
    batch_size: int = Field(default=128, gt=0)
    learning_rate: float = Field(default=1e-3, gt=0)
    seed: int = Field(default=0, ge=0)
    latent_dim: int = Field(default=2, gt=0)
    hidden: List[int] = Field(default_factory=lambda: [128, 64])
    sigma_floor: float = Field(default=1e-4, gt=0)
    holdout_fraction: float = Field(default=0.1, gt=0, lt=1)
    grad_clip: float = Field(default=10.0, gt=0)
    beta1: float = Field(default=0.9, gt=0, lt=1)
    beta2: float = Field(default=0.999, gt=0, lt=1)
    adam_eps: float = Field(default=1e-8, gt=0)
    l2: float = Field(default=1e-4, ge=0)

    @model_validator(mode="after")
    def _positive_widths(self) -> "TrainConfig":
        if not self.hidden or any(width <= 0 for width in self.hidden):
            raise ValueError(f"hidden widths must be positive, got {self.hidden}")
        return self


class CurveOptConfig(BaseModel):
    """Knobs for the shorter-curve optimizer"""
    quad_points: int = Field(default=256, ge=2)
    energy_segments: int = Field(default=64, ge=1)
    step_size: float = Field(default=1e-2, gt=0)
    max_step_size: float = Field(default=10.0, gt=0)
    step_growth: float = Field(default=2.0, ge=1.0)
    max_halvings: int = Field(default=20, gt=0)
    max_iters: int = Field(default=2000, gt=0)
    plateau_window: int = Field(default=20, gt=0)
    plateau_rel_tol: float = Field(default=1e-3, gt=0)
    max_control_points: int = Field(default=12, ge=4)
    # None picks exact_vjp when the metric supports it
    gradient_mode: Optional[GradientMode] = None
    fd_step: float = Field(default=1e-4, gt=0)


class McConfig(BaseModel):
    """Monte-Carlo estimate of the worst-case relative improvement"""
    n_samples: int = Field(default=1000, ge=1)
    alpha: float = Field(default=1.0, gt=0)
    seed: int = Field(default=0, ge=0)
    shorten: CurveOptConfig = Field(default_factory=CurveOptConfig)
    histogram_bins: int = Field(default=50, gt=0)
    workers: int = Field(default=1, ge=1)
    max_failure_fraction: float = Field(default=0.1, ge=0, le=1)
    bootstrap_resamples: int = Field(default=2000, ge=0)


class Bounds(BaseModel):
    """Axis-aligned 2D latent window"""
    xmin: float
    xmax: float
    ymin: float
    ymax: float

    @model_validator(mode="after")
    def _ordered(self) -> "Bounds":
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise ValueError(f"bounds must be ordered, got {self.model_dump()}")
        return self

    def contains(self, x: float, y: float) -> bool:
        return self.xmin <= x <= self.xmax and self.ymin <= y <= self.ymax


class GridConfig(BaseModel):
    """Scalar-field grid over a 2D latent window"""
    kind: FieldKind = FieldKind.LOG_CONDITION
    bounds: Bounds = Field(default_factory=lambda: Bounds(xmin=-3.0, xmax=3.0, ymin=-3.0, ymax=3.0))
    nx: int = Field(default=100, ge=2)
    ny: int = Field(default=100, ge=2)
    workers: int = Field(default=1, ge=1)


class StreamlineConfig(BaseModel):
    """Euler integration of an extreme-eigenvector field"""
    kind: StreamKind = StreamKind.MIN_EIG
    step_length: float = Field(default=0.05, gt=0)
    n_steps: int = Field(default=200, gt=0)
    bounds: Optional[Bounds] = None
    workers: int = Field(default=1, ge=1)


class CompareConfig(BaseModel):
    """Cross-model interpolation comparison"""
    n_pairs: int = Field(default=20, gt=0)
    threshold: float = Field(default=0.05, ge=0)
    seed: int = Field(default=0, ge=0)
    variant: MetricVariant = MetricVariant.STOCHASTIC
    shorten: CurveOptConfig = Field(default_factory=CurveOptConfig)
    workers: int = Field(default=1, ge=1)


class ImprovementRecord(BaseModel):
    """One Monte-Carlo sample"""
    index: int
    x_a: List[float]
    x_b: List[float]
    d_straight: float
    d_short: float
    rel_improvement: float
    fallback_used: bool = False

    @model_validator(mode="after")
    def _improvement_range(self) -> "ImprovementRecord":
        if self.d_short > self.d_straight:
            raise ValueError("d_short must not exceed d_straight")
        if not (0.0 <= self.rel_improvement < 1.0):
            raise ValueError(f"relative improvement out of range: {self.rel_improvement}")
        return self


class SampleFailure(BaseModel):
    """A Monte-Carlo sample that raised"""
    index: int
    error_message: str


class McSummary(BaseModel):
    """Aggregate of a Monte-Carlo run"""
    n_samples: int
    n_recorded: int
    n_failures: int
    n_fallbacks: int
    mean: float
    std: float
    ci_low: Optional[float] = None
    ci_high: Optional[float] = None
    bin_edges: List[float]
    counts: List[int]
    records: List[ImprovementRecord]
    failures: List[SampleFailure] = Field(default_factory=list)


class ModelImprovement(BaseModel):
    """Per-model half of a comparison row"""
    z0: List[float]
    z1: List[float]
    d_straight: float
    d_short: float
    rel_improvement: float


class ComparisonRow(BaseModel):
    """One test pair evaluated under two generators"""
    pair_index: int
    start_index: int
    end_index: int
    model_a: ModelImprovement
    model_b: ModelImprovement
    gap: float
    selected: bool
    rank: int = 0


class JacobianAudit(BaseModel):
    """Analytic vs finite-difference Jacobian agreement for one network"""
    network: str
    n_points: int
    max_rel_error: float
    tolerance: float
    passed: bool


class RunManifest(BaseModel):
    """Everything needed to reproduce one CLI invocation"""
    command: str
    argv: List[str]
    config: Dict[str, Any]
    seed: Optional[int] = None
    started_at: datetime
    finished_at: Optional[datetime] = None
    outputs: List[str] = Field(default_factory=list)
    version: str
