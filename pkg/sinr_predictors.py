"""
Current-slot SINR estimators feeding the gamma_post entry of the state.

Modes:
    oracle  true SINR of the current slot
    dcqi    no estimate; the state falls back to the latest report
    kf      constant-velocity Kalman filter with HARQ bias correction,
            adaptive process noise and innovation gating
    dt, rf  regression tree / random forest retrained online on a sliding
            buffer of (report window + HARQ accumulator) features
    oco     exponential-weights mixture of ACK/NACK-driven experts with
            Fixed-Share mixing
"""
import logging
from collections import deque
from dataclasses import dataclass
from typing import Deque, Iterable, List, Optional, Tuple

import numpy as np
from filterpy.common import Q_discrete_white_noise
from filterpy.kalman import KalmanFilter
from sklearn.ensemble import RandomForestRegressor
from sklearn.tree import DecisionTreeRegressor

from exceptions import DomainError
from mcs_catalog import McsCatalog, get_catalog
from phy_abstraction import Harq, threshold_db
from schemas import BlerModel, KalmanConfig, OcoConfig, PredictorConfig, TreeConfig

logger = logging.getLogger(__name__)

GATE_WARN_RATE = 0.2
GATE_WARN_MIN_STEPS = 100


@dataclass
class FeedbackView:
    """What a predictor may look at when asked for slot ``slot``"""
    slot: int
    trace: object = None
    last_report_db: Optional[float] = None


@dataclass
class Observation:
    """Per-slot feedback delivered to a predictor"""
    reported_sinr_db: Optional[float] = None
    harq: Optional[Harq] = None
    last_mcs: int = 0
    offset_norm: float = 0.0


# Kalman filter

class KalmanSinrPredictor:
    """Constant-velocity filter over the delayed SINR reports"""

    def __init__(self, cfg: KalmanConfig, horizon_slots: int = 1):
        self.cfg = cfg
        self.horizon = horizon_slots
        self.kf: Optional[KalmanFilter] = None
        self.noise_ewma = 1.0
        self.gated = 0
        self.steps = 0
        self._warned = False
        self._q_base = Q_discrete_white_noise(dim=2, dt=1.0, var=cfg.process_noise)

    @property
    def noise_scale(self) -> float:
        return float(np.clip(self.noise_ewma, 1.0, self.cfg.max_noise_scale))

    def _start(self, z: float) -> None:
        kf = KalmanFilter(dim_x=2, dim_z=1)
        kf.x = np.array([[z], [0.0]])
        kf.F = np.array([[1.0, 1.0], [0.0, 1.0]])
        kf.H = np.array([[1.0, 0.0]])
        kf.P = np.diag([self.cfg.initial_var, 1.0])
        kf.R = np.array([[self.cfg.measurement_noise_db2]])
        kf.Q = self._q_base.copy()
        self.kf = kf

    def update(self, obs: Observation) -> None:
        if obs.reported_sinr_db is not None:
            z = float(obs.reported_sinr_db)
            if self.kf is None:
                self._start(z)
            else:
                self._step(z)
        if obs.harq == Harq.NACK and self.kf is not None:
            self.kf.x[0, 0] -= self.cfg.nack_bias_db

    def _step(self, z: float) -> None:
        kf = self.kf
        kf.Q = self.noise_scale * self._q_base
        kf.predict()
        innovation = z - (kf.H @ kf.x).item()
        s = (kf.H @ kf.P @ kf.H.T + kf.R).item()
        normalized = abs(innovation) / np.sqrt(s)
        self.steps += 1
        if normalized > self.cfg.gate_threshold:
            self.gated += 1
            logger.debug("KF gated innovation %.2f dB (%.1f sigma)", innovation, normalized)
            if not self._warned and self.steps >= GATE_WARN_MIN_STEPS and self.gated > GATE_WARN_RATE * self.steps:
                logger.warning("KF gated %d of %d reports; measurement noise may be too small", self.gated, self.steps)
                self._warned = True
            return
        kf.update(z)
        kf.P = 0.5 * (kf.P + kf.P.T)
        a = self.cfg.innovation_ewma
        self.noise_ewma = a * self.noise_ewma + (1 - a) * normalized

    @property
    def level(self) -> float:
        return float(self.kf.x[0, 0])

    @property
    def velocity(self) -> float:
        return float(self.kf.x[1, 0])

    @property
    def covariance(self) -> np.ndarray:
        return self.kf.P

    def predict(self, view: FeedbackView) -> Optional[float]:
        if self.kf is None:
            return None
        return self.level + self.horizon * self.velocity


# Regression trees

def fit_tree(buffer: Iterable[Tuple[np.ndarray, float]], params: TreeConfig, ensemble: bool = False):
    """
    Fit a CART regression tree (or a bagged forest of them)

    Splits minimise within-node variance; depth and leaf size follow
    ``params``. The forest variant draws a bootstrap sample per tree and
    considers ``max_features`` features at each split.
    """
    pairs = list(buffer)
    if not pairs:
        raise DomainError("cannot fit a tree on an empty buffer")
    features = np.array([f for f, _ in pairs], dtype=float)
    targets = np.array([t for _, t in pairs], dtype=float)

    if ensemble:
        model = RandomForestRegressor(
            n_estimators=params.n_trees,
            max_depth=params.max_depth,
            min_samples_leaf=params.min_samples_leaf,
            max_features=params.max_features,
            bootstrap=params.bootstrap,
            random_state=params.seed,
        )
    else:
        model = DecisionTreeRegressor(
            max_depth=params.max_depth,
            min_samples_leaf=params.min_samples_leaf,
            random_state=params.seed,
        )
    return model.fit(features, targets)


class TreeSinrPredictor:
    """Online tree regressor: [last W reports, offset accumulator] -> report h slots ahead"""

    def __init__(self, cfg: TreeConfig, horizon_slots: int = 1, ensemble: bool = False):
        self.cfg = cfg
        self.horizon = horizon_slots
        self.ensemble = ensemble
        self.reports: Deque[float] = deque(maxlen=cfg.window)
        self.pending: Deque[np.ndarray] = deque()
        self.buffer: Deque[Tuple[np.ndarray, float]] = deque(maxlen=cfg.buffer_size)
        self.model = None
        self.offset_norm = 0.0
        self._since_fit = 0

    @property
    def feature_dim(self) -> int:
        return self.cfg.window + 1

    def features(self) -> np.ndarray:
        window = list(self.reports)
        window += [window[-1]] * (self.cfg.window - len(window))
        vector = np.array(window + [self.offset_norm], dtype=float)
        assert vector.shape == (self.feature_dim,)
        return vector

    def update(self, obs: Observation) -> None:
        self.offset_norm = obs.offset_norm
        if obs.reported_sinr_db is None:
            return
        z = float(obs.reported_sinr_db)
        if len(self.pending) == self.horizon:
            self.buffer.append((self.pending.popleft(), z))
        self.reports.appendleft(z)
        self.pending.append(self.features())

        self._since_fit += 1
        if self._since_fit >= self.cfg.retrain_every and self.buffer:
            self.model = fit_tree(self.buffer, self.cfg, ensemble=self.ensemble)
            self._since_fit = 0
            logger.debug("Retrained %s on %d samples", "forest" if self.ensemble else "tree", len(self.buffer))

    def predict(self, view: FeedbackView) -> Optional[float]:
        if not self.reports:
            return None
        if self.model is None:
            return self.reports[0]
        return float(self.model.predict(self.features()[None, :])[0])


# Online convex optimisation over experts

class OcoSinrPredictor:
    """
    Mixture of ACK/NACK-driven SINR experts

    Expert e with (eta, beta) moves up by eta*tau*(1+beta) on ACK and down by
    eta*(1-tau)*(1-beta) on NACK. Its loss is the hinge distance to the
    threshold of the MCS just used, in the direction the feedback implies.
    Weights follow exponential weights then Fixed-Share mixing.
    """

    def __init__(self, cfg: OcoConfig, bler_model: BlerModel, catalog: Optional[McsCatalog] = None):
        self.cfg = cfg
        self.bler_model = bler_model
        self.catalog = catalog or get_catalog()
        grid = [(eta, beta) for eta in cfg.etas for beta in cfg.betas]
        self.etas = np.array([g[0] for g in grid])
        self.betas = np.array([g[1] for g in grid])
        self.num_experts = len(grid)
        self.estimates = np.full(self.num_experts, cfg.initial_sinr_db)
        self.weights = np.full(self.num_experts, 1.0 / self.num_experts)
        self.started = False

    def threshold(self, mcs: int) -> float:
        tau, k = self.cfg.tau, self.bler_model.slope_per_db
        return float(threshold_db(self.bler_model, mcs, self.catalog)) - np.log(1.0 / tau - 1.0) / k

    def losses(self, harq: Harq, mcs: int) -> np.ndarray:
        theta = self.threshold(mcs)
        if harq == Harq.ACK:
            return np.maximum(0.0, theta - self.estimates)
        return np.maximum(0.0, self.estimates - theta)

    def update(self, obs: Observation) -> None:
        if obs.reported_sinr_db is not None and not self.started:
            self.estimates[:] = obs.reported_sinr_db
            self.started = True
        if obs.harq not in (Harq.ACK, Harq.NACK):
            return
        self.started = True
        tau = self.cfg.tau
        loss = self.losses(obs.harq, obs.last_mcs)

        if obs.harq == Harq.ACK:
            self.estimates += self.etas * tau * (1 + self.betas)
        else:
            self.estimates -= self.etas * (1 - tau) * (1 - self.betas)
        self.estimates = np.clip(self.estimates, *self.cfg.clip_db)

        weights = self.weights * np.exp(-self.cfg.hedge_rate * (loss - loss.min()))
        weights /= weights.sum()
        alpha = self.cfg.share_rate
        self.weights = (1 - alpha) * weights + alpha / self.num_experts

    def predict(self, view: FeedbackView) -> Optional[float]:
        return float(self.weights @ self.estimates)


# Handle

class SinrPredictor:
    """One handle per environment; keeps a per-UE estimator bank"""

    def __init__(self, config: PredictorConfig, horizon_slots: int = 1,
                 bler_model: Optional[BlerModel] = None, fallback_db: float = 15.0,
                 catalog: Optional[McsCatalog] = None):
        self.config = config
        self.horizon = horizon_slots
        self.bler_model = bler_model or BlerModel()
        self.fallback_db = fallback_db
        self.catalog = catalog
        self._estimators: List[object] = []
        self._last_report: List[Optional[float]] = []

    @property
    def mode(self) -> str:
        return self.config.mode

    @property
    def omits_current_estimate(self) -> bool:
        return self.mode == "dcqi"

    def _make(self):
        mode = self.mode
        if mode == "kf":
            return KalmanSinrPredictor(self.config.kf, self.horizon)
        if mode in ("dt", "rf"):
            return TreeSinrPredictor(self.config.tree, self.horizon, ensemble=(mode == "rf"))
        if mode == "oco":
            return OcoSinrPredictor(self.config.oco, self.bler_model, self.catalog)
        return None

    def reset(self, num_ues: int) -> None:
        self._estimators = [self._make() for _ in range(num_ues)]
        self._last_report = [None] * num_ues

    def update(self, ue: int, obs: Observation) -> None:
        if obs.reported_sinr_db is not None:
            self._last_report[ue] = float(obs.reported_sinr_db)
        estimator = self._estimators[ue]
        if estimator is not None:
            estimator.update(obs)

    def estimator(self, ue: int):
        return self._estimators[ue]

    def predict(self, ue: int, view: FeedbackView) -> float:
        if self.mode == "oracle":
            return view.trace.at(ue, view.slot)
        last = view.last_report_db if view.last_report_db is not None else self._last_report[ue]
        if last is None:
            return self.fallback_db
        if self.mode == "dcqi":
            return last
        value = self._estimators[ue].predict(view)
        if value is None or not np.isfinite(value):
            return last
        return float(value)


def make_predictor(mode: str = "oracle", horizon_slots: int = 1, config: Optional[PredictorConfig] = None,
                   **kwargs) -> SinrPredictor:
    config = (config or PredictorConfig()).model_copy(update={"mode": mode})
    return SinrPredictor(config, horizon_slots=horizon_slots, **kwargs)
