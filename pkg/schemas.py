import math
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

NUM_MCS = 29
MAX_MCS = NUM_MCS - 1

PredictorMode = Literal["oracle", "dcqi", "kf", "dt", "rf", "oco"]
Method = Literal["olla", "salad", "rl"]

SETUPS = {"A": (3, 10), "B": (1, 1)}


# MCS Schemas
class McsEntry(BaseModel):
    index: int = Field(..., ge=0)
    mod_order: int
    code_rate: float = Field(..., gt=0, lt=1)
    se_nom: float

    model_config = ConfigDict(frozen=True)

    @field_validator("mod_order")
    @classmethod
    def check_mod_order(cls, value: int) -> int:
        if value not in (2, 4, 6, 8):
            raise ValueError("mod_order must be one of 2, 4, 6, 8")
        return value

    @model_validator(mode="after")
    def check_se_nom(self):
        if not math.isclose(self.se_nom, self.mod_order * self.code_rate, rel_tol=1e-12):
            raise ValueError("se_nom must equal mod_order * code_rate")
        return self


# Channel Schemas
class ChannelScenario(BaseModel):
    name: str = "custom"
    num_ues: int = Field(..., ge=1)
    mean_sinr_db: List[float]
    shadow_rho: float = Field(0.99, ge=0, lt=1)
    shadow_sigma_db: float = Field(3.0, ge=0)
    fast_fading: bool = True
    doppler_corr: float = Field(0.97, ge=0, lt=1)
    num_slots: int = Field(1000, ge=1)
    seed: int = 0

    @model_validator(mode="after")
    def check_lengths(self):
        if len(self.mean_sinr_db) != self.num_ues:
            raise ValueError("mean_sinr_db length must equal num_ues")
        return self


# PHY Schemas
class BlerModel(BaseModel):
    slope_per_db: float = Field(2.0, gt=0)
    impl_loss_db: float = Field(2.0, ge=0)


class FeedbackConfig(BaseModel):
    report_delay_slots: int = Field(3, ge=1)
    quant_step_db: float = Field(1.0, ge=0)


# Environment Schemas
class SchedulerConfig(BaseModel):
    mode: Literal["all", "pf"] = "all"
    k: int = Field(1, ge=1)
    alpha: float = Field(0.05, gt=0, le=1)


class EnvConfig(BaseModel):
    n_cqi: int = Field(3, ge=1)
    n_harq: int = Field(10, ge=1)
    n_bler: int = Field(20, ge=1)
    k_e: float = Field(0.0, ge=0)
    tau: float = Field(0.1, gt=0, lt=1)
    scheduler: SchedulerConfig = Field(default_factory=SchedulerConfig)
    sinr_norm_range_db: Tuple[float, float] = (-10.0, 40.0)
    offset_clip: float = Field(5.0, gt=0)
    ack_step: float = Field(0.1, gt=0)
    nack_step: float = Field(0.9, gt=0)
    bler: BlerModel = Field(default_factory=BlerModel)
    feedback: FeedbackConfig = Field(default_factory=FeedbackConfig)

    @model_validator(mode="after")
    def check_norm_range(self):
        lo, hi = self.sinr_norm_range_db
        if not lo < hi:
            raise ValueError("sinr_norm_range_db must satisfy lo < hi")
        return self

    @property
    def per_ue_dim(self) -> int:
        return self.n_cqi + self.n_harq + 5


# Predictor Schemas
class KalmanConfig(BaseModel):
    measurement_noise_db2: float = Field(1.0, gt=0)
    process_noise: float = Field(0.01, gt=0)
    initial_var: float = Field(25.0, gt=0)
    gate_threshold: float = Field(4.0, gt=0)
    nack_bias_db: float = Field(1.0, ge=0)
    innovation_ewma: float = Field(0.9, ge=0, lt=1)
    max_noise_scale: float = Field(10.0, ge=1)


class TreeConfig(BaseModel):
    window: int = Field(5, ge=1)
    buffer_size: int = Field(500, ge=1)
    retrain_every: int = Field(50, ge=1)
    max_depth: int = Field(6, ge=1)
    min_samples_leaf: int = Field(5, ge=1)
    n_trees: int = Field(10, ge=1)
    bootstrap: bool = True
    max_features: Optional[str] = "sqrt"
    seed: int = 0


class OcoConfig(BaseModel):
    etas: List[float] = [0.5, 1.0, 2.0, 3.0]
    betas: List[float] = [0.0, 0.15, 0.3]
    tau: float = Field(0.1, gt=0, lt=1)
    share_rate: float = Field(0.0, ge=0, le=1)
    hedge_rate: float = Field(0.5, gt=0)
    initial_sinr_db: float = 15.0
    clip_db: Tuple[float, float] = (-10.0, 50.0)


class PredictorConfig(BaseModel):
    mode: PredictorMode = "oracle"
    kf: KalmanConfig = Field(default_factory=KalmanConfig)
    tree: TreeConfig = Field(default_factory=TreeConfig)
    oco: OcoConfig = Field(default_factory=OcoConfig)


# Baseline Schemas
class OllaConfig(BaseModel):
    target_bler: float = Field(0.1, gt=0, lt=1)
    delta_ack_db: float = Field(0.1, gt=0)
    offset_limit_db: float = Field(15.0, gt=0)

    @property
    def delta_nack_db(self) -> float:
        return self.delta_ack_db * (1 - self.target_bler) / self.target_bler


class SaladConfig(BaseModel):
    learning_rate: float = Field(1.2, gt=0)
    bias_threshold: float = Field(0.25, ge=0)
    score_window: int = Field(15, ge=1)
    probe_prob: float = Field(0.15, ge=0, le=1)
    probe_target: float = Field(0.95, gt=0, lt=1)
    integral_gain: float = Field(0.05, ge=0)
    bler_target: float = Field(0.1, gt=0, lt=1)
    tau_bounds: Tuple[float, float] = (0.01, 0.3)
    sinr_bounds_db: Tuple[float, float] = (-10.0, 50.0)
    initial_sinr_db: float = 10.0


# Agent Schemas
class TrainConfig(BaseModel):
    learning_rate: float = Field(3e-4, gt=0)
    clip_eps: float = Field(0.2, gt=0)
    entropy_coef: float = Field(0.05, ge=0)
    value_coef: float = Field(0.5, ge=0)
    discount: float = 0.0
    rollout_len: int = Field(2048, ge=1)
    minibatch_size: int = Field(256, ge=1)
    epochs: int = Field(10, ge=1)
    total_episodes: int = Field(60, ge=1)
    total_steps: Optional[int] = Field(None, ge=1)
    hidden_units: int = Field(64, ge=1)
    max_grad_norm: float = Field(0.5, gt=0)
    per_ue_reward: bool = True
    normalize_advantages: bool = True
    seed: int = 0

    @field_validator("discount")
    @classmethod
    def check_bandit(cls, value: float) -> float:
        # контекстный бандит: дисконт строго 0
        if value != 0.0:
            raise ValueError("discount must be 0 (contextual bandit)")
        return value


# Experiment Schemas
class ExperimentConfig(BaseModel):
    label: Optional[str] = None
    scenario: str = "cell-3ue"
    trace_path: Optional[str] = None
    method: Method = "rl"
    predictor: PredictorMode = "oracle"
    setup: Optional[Literal["A", "B"]] = "A"
    n_cqi: Optional[int] = Field(None, ge=1)
    n_harq: Optional[int] = Field(None, ge=1)
    k_e: float = Field(0.0, ge=0)
    tau: float = Field(0.1, gt=0, lt=1)
    seeds: List[int] = [0, 1, 2, 3, 4]
    realizations: int = Field(10, ge=1)
    episode_slots: int = Field(1000, ge=1)
    train_episodes: int = Field(60, ge=1)
    scheduler: SchedulerConfig = Field(default_factory=SchedulerConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    output_dir: Optional[str] = None

    @model_validator(mode="after")
    def resolve_windows(self):
        if self.setup is not None:
            n_cqi, n_harq = SETUPS[self.setup]
            if (self.n_cqi not in (None, n_cqi)) or (self.n_harq not in (None, n_harq)):
                raise ValueError(
                    f"setup {self.setup} fixes (n_cqi, n_harq) = ({n_cqi}, {n_harq})"
                )
            self.n_cqi, self.n_harq = n_cqi, n_harq
        elif self.n_cqi is None or self.n_harq is None:
            raise ValueError("either setup or both n_cqi and n_harq are required")
        if not self.seeds:
            raise ValueError("seeds must not be empty")
        return self

    @property
    def display_label(self) -> str:
        if self.label:
            return self.label
        if self.method == "rl":
            return f"rl-{self.predictor}-ke{self.k_e:g}"
        return self.method


class MetricsSummary(BaseModel):
    label: str
    method: str
    predictor: Optional[str] = None
    k_e: float = 0.0
    mean_se: float
    median_se: float
    mean_bler: float = Field(..., ge=0, le=1)
    median_bler: float = Field(..., ge=0, le=1)
    median_mcs: float
    per_ue_mean_se: List[float]
    per_ue_bler: List[float]
    mcs_histogram: List[List[int]]
    cdf_se: List[Tuple[float, float]]
    cdf_bler: List[Tuple[float, float]]
    cdf_mcs: List[Tuple[float, float]]
    episodes: int
    scheduled_slots: int
    delta_se_pct: Optional[float] = None
    state_dim: Optional[int] = None
    trace_digests: List[str] = []


class ComparisonRow(BaseModel):
    label: str
    method: str
    predictor: Optional[str] = None
    k_e: float
    mean_se: float
    median_se: float
    mean_bler: float
    median_bler: float
    median_mcs: float
    delta_se_pct: float


# Offline FQI Schemas
class LoggedSample(BaseModel):
    cqi: int
    rsrp: float
    bler_inst: float = Field(..., ge=0, le=1)
    mcs: int = Field(..., ge=0, le=MAX_MCS)
    reward: float = Field(..., ge=0)
    next_cqi: int
    next_rsrp: float
    next_bler: float = Field(..., ge=0, le=1)
    direction: Literal["DL", "UL"]

    @field_validator("rsrp", "next_rsrp", "reward")
    @classmethod
    def check_finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("value must be finite")
        return value


class FqiConfig(BaseModel):
    gamma: float = Field(0.5, ge=0, lt=1)
    iterations: int = Field(30, ge=1)
    n_estimators: int = Field(50, ge=1)
    max_depth: int = Field(10, ge=1)
    min_samples_leaf: int = Field(5, ge=1)
    seed: int = 0
    n_jobs: int = 1


# API Schemas
class BlerCurveRequest(BaseModel):
    mcs: int = Field(..., ge=0)
    sinr_db: List[float] = Field(..., min_length=1)
    model: BlerModel = Field(default_factory=BlerModel)


class BlerCurveResponse(BaseModel):
    mcs: int
    threshold_db: float
    sinr_db: List[float]
    bler: List[float]


class RunResponse(BaseModel):
    summary: MetricsSummary
    artifacts: Dict[str, str]


class CompareRequest(BaseModel):
    configs: List[ExperimentConfig] = Field(..., min_length=2)
    reference: str


class FqiResponse(BaseModel):
    samples: int
    dropped_rows: int
    avg_q_curve: List[float]
    learned_pct: List[float]
    behavior_pct: List[float]
    tv_distance: float
