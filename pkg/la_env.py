"""
Slot-stepped link-adaptation environment.

Per UE the state block is
    [sinr_post, cqi window (n_cqi), harq window (n_harq), last_mcs/28,
     bler estimate, offset accumulator, ack rate]
so the flat state has (n_cqi + n_harq + 5) * U entries.

Per UE the reward is se_nom(m) * 1{ACK} - lambda * 1{NACK}, where lambda is
the integral BLER controller max(0, k_E * sum(1{NACK} - tau)) over past
scheduled slots. With k_E = 0 this is the plain delivered spectral efficiency.
"""
import logging
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Deque, Iterable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from channel_model import SinrTrace
from exceptions import ConfigError, DomainError, EpisodeFinishedError
from mcs_catalog import McsCatalog, get_catalog
from phy_abstraction import Harq, bler, expected_se, report_effective_sinr, sample_harq
from schemas import EnvConfig, SchedulerConfig
from sinr_predictors import FeedbackView, Observation, SinrPredictor, make_predictor

logger = logging.getLogger(__name__)

SLOT_LOG_COLUMNS = [
    "slot", "ue", "scheduled", "mcs", "sinr_true_db", "sinr_est_db",
    "ack", "se_achieved", "reward", "lambda",
]
PF_EPS = 1e-9


@dataclass
class UeState:
    """Feedback windows and accumulators of one UE"""
    cqi_window: Deque[float]
    harq_window: Deque[int]
    bler_window: Deque[int]
    last_mcs: int = 0
    offset_accum: float = 0.0
    acks: int = 0
    scheduled: int = 0
    penalty_integral: float = 0.0
    lam: float = 0.0
    last_report_db: float = 0.0

    @classmethod
    def neutral(cls, config: EnvConfig, report_norm: float, report_db: float) -> "UeState":
        return cls(
            cqi_window=deque([report_norm] * config.n_cqi, maxlen=config.n_cqi),
            harq_window=deque([int(Harq.UNSCHEDULED)] * config.n_harq, maxlen=config.n_harq),
            bler_window=deque(maxlen=config.n_bler),
            last_report_db=report_db,
        )

    @property
    def ack_rate(self) -> float:
        return self.acks / self.scheduled if self.scheduled else 0.0

    @property
    def bler_estimate(self) -> float:
        if not self.bler_window:
            return 0.0
        return sum(self.bler_window) / len(self.bler_window)


@dataclass
class UeSlotRecord:
    slot: int
    ue: int
    scheduled: bool
    mcs: int
    sinr_true_db: float
    sinr_est_db: float
    ack: int
    se_achieved: float
    reward: float
    lam: float


@dataclass
class SlotResult:
    slot: int
    records: List[UeSlotRecord] = field(default_factory=list)

    @property
    def ue_rewards(self) -> np.ndarray:
        return np.array([r.reward for r in self.records], dtype=float)

    @property
    def reward(self) -> float:
        return float(self.ue_rewards.sum())

    @property
    def scheduled(self) -> np.ndarray:
        return np.array([r.scheduled for r in self.records], dtype=bool)


class Scheduler:
    """Slot-level UE subset selection: everyone, or proportional fair top-k"""

    def __init__(self, config: SchedulerConfig, num_ues: int):
        if config.mode == "pf" and config.k > num_ues:
            raise ConfigError(f"pf scheduler k={config.k} exceeds the number of UEs ({num_ues})")
        self.config = config
        self.num_ues = num_ues
        self.avg_se = np.full(num_ues, PF_EPS)

    def select(self, achievable_se: Sequence[float]) -> List[int]:
        """Scheduled UE indices in ascending order"""
        if self.config.mode == "all" or self.config.k >= self.num_ues:
            return list(range(self.num_ues))
        metric = np.asarray(achievable_se, dtype=float) / np.maximum(self.avg_se, PF_EPS)
        # stable sort on -metric keeps the lowest index first among ties
        order = np.argsort(-metric, kind="stable")
        return sorted(int(u) for u in order[: self.config.k])

    def update(self, delivered_se: Sequence[float]) -> None:
        alpha = self.config.alpha
        self.avg_se = (1 - alpha) * self.avg_se + alpha * np.asarray(delivered_se, dtype=float)


def schedule(config: SchedulerConfig, achievable_se: Sequence[float],
             avg_se: Optional[Sequence[float]] = None) -> List[int]:
    """One-shot scheduling decision for a given delivered-SE history"""
    scheduler = Scheduler(config, len(achievable_se))
    if avg_se is not None:
        scheduler.avg_se = np.asarray(avg_se, dtype=float)
    return scheduler.select(achievable_se)


class LinkAdaptationEnv:
    """Multi-UE MCS selection environment over one SINR trace"""

    def __init__(self, config: EnvConfig, catalog: Optional[McsCatalog] = None):
        self.config = config
        self.catalog = catalog or get_catalog()
        self.trace: Optional[SinrTrace] = None
        self.predictor: Optional[SinrPredictor] = None
        self.scheduler: Optional[Scheduler] = None
        self.ues: List[UeState] = []
        self.records: List[UeSlotRecord] = []
        self.slot = 0
        self.num_slots = 0
        self._rng: Optional[np.random.Generator] = None
        self._estimates_db: List[float] = []

    @property
    def num_ues(self) -> int:
        return len(self.ues)

    @property
    def per_ue_dim(self) -> int:
        return self.config.per_ue_dim

    @property
    def state_dim(self) -> int:
        return self.per_ue_dim * self.num_ues

    @property
    def done(self) -> bool:
        return self.slot >= self.num_slots

    @property
    def midpoint_db(self) -> float:
        lo, hi = self.config.sinr_norm_range_db
        return 0.5 * (lo + hi)

    def normalize_db(self, value_db: float) -> float:
        lo, hi = self.config.sinr_norm_range_db
        return float(np.clip((value_db - lo) / (hi - lo), 0.0, 1.0))

    def reset(self, trace: SinrTrace, predictor: Optional[SinrPredictor] = None,
              rng: Optional[np.random.Generator] = None, num_slots: Optional[int] = None,
              num_ues: Optional[int] = None) -> np.ndarray:
        if num_ues is not None and num_ues != trace.num_ues:
            raise DomainError(f"trace has {trace.num_ues} UEs, expected {num_ues}")
        if num_slots is not None and not 1 <= num_slots <= trace.num_slots:
            raise DomainError(f"episode length {num_slots} outside [1, {trace.num_slots}]")

        self.trace = trace
        self.num_slots = num_slots or trace.num_slots
        self.slot = 0
        self.records = []
        self._rng = rng if rng is not None else np.random.default_rng()
        self.scheduler = Scheduler(self.config.scheduler, trace.num_ues)

        self.predictor = predictor or make_predictor(
            "oracle", horizon_slots=self.config.feedback.report_delay_slots,
            bler_model=self.config.bler, fallback_db=self.midpoint_db, catalog=self.catalog,
        )
        self.predictor.reset(trace.num_ues)

        self.ues = []
        for ue in range(trace.num_ues):
            report = report_effective_sinr(trace, self.config.feedback, 0, ue)
            self.ues.append(UeState.neutral(self.config, self.normalize_db(report), report))
            self.predictor.update(ue, Observation(reported_sinr_db=report))
        logger.debug("Episode reset: %d UEs, %d slots, predictor %s",
                     trace.num_ues, self.num_slots, self.predictor.mode)
        return self._state()

    def _state(self) -> np.ndarray:
        slot = min(self.slot, self.num_slots - 1)
        clip = self.config.offset_clip
        blocks, self._estimates_db = [], []
        for ue, st in enumerate(self.ues):
            if self.predictor.omits_current_estimate:
                estimate = st.last_report_db
            else:
                view = FeedbackView(slot=slot, trace=self.trace, last_report_db=st.last_report_db)
                estimate = self.predictor.predict(ue, view)
            self._estimates_db.append(estimate)
            blocks.append([self.normalize_db(estimate)])
            blocks.append(list(st.cqi_window))
            blocks.append(list(st.harq_window))
            blocks.append([
                st.last_mcs / self.catalog.max_index,
                st.bler_estimate,
                float(np.clip(st.offset_accum, -clip, clip)) / clip,
                st.ack_rate,
            ])
        state = np.concatenate([np.asarray(b, dtype=float) for b in blocks])
        assert state.shape == (self.state_dim,)
        return state

    def _check_action(self, action) -> List[int]:
        values = np.asarray(action).ravel()
        if values.size != self.num_ues:
            raise DomainError(f"action has {values.size} entries, expected {self.num_ues}")
        return [self.catalog.check_index(a) for a in values]

    def achievable_se(self) -> np.ndarray:
        """Best expected SE at each UE's latest report (the PF numerator)"""
        sinr = np.array([st.last_report_db for st in self.ues])
        table = expected_se(self.config.bler, np.arange(len(self.catalog))[None, :], sinr[:, None], self.catalog)
        return table.max(axis=1)

    def step(self, action, rng: Optional[np.random.Generator] = None):
        """Apply one MCS per UE; returns (next_state, reward, SlotResult)"""
        if self.trace is None:
            raise EpisodeFinishedError("environment has not been reset")
        if self.done:
            raise EpisodeFinishedError(f"episode finished after {self.num_slots} slots")
        mcs = self._check_action(action)
        rng = rng if rng is not None else self._rng
        cfg, t = self.config, self.slot

        scheduled = set(self.scheduler.select(self.achievable_se()))
        result = SlotResult(slot=t)
        delivered = np.zeros(self.num_ues)

        for ue, st in enumerate(self.ues):
            true_db = self.trace.at(ue, t)
            lam = st.lam
            harq, se, reward = Harq.UNSCHEDULED, 0.0, 0.0
            if ue in scheduled:
                harq = sample_harq(cfg.bler, mcs[ue], true_db, rng, self.catalog)
                if harq == Harq.ACK:
                    se = reward = float(self.catalog.se_nom(mcs[ue]))
                else:
                    reward = -lam
                self._learn(st, mcs[ue], harq)
            else:
                st.harq_window.appendleft(int(Harq.UNSCHEDULED))
            delivered[ue] = se
            result.records.append(UeSlotRecord(
                slot=t, ue=ue, scheduled=ue in scheduled, mcs=mcs[ue],
                sinr_true_db=true_db, sinr_est_db=self._estimates_db[ue],
                ack=int(harq), se_achieved=se, reward=reward, lam=lam,
            ))

        self.scheduler.update(delivered)
        self.records.extend(result.records)
        self.slot += 1

        report_slot = min(self.slot, self.num_slots - 1)
        for ue, st in enumerate(self.ues):
            report = report_effective_sinr(self.trace, cfg.feedback, report_slot, ue)
            st.last_report_db = report
            st.cqi_window.appendleft(self.normalize_db(report))
            record = result.records[ue]
            self.predictor.update(ue, Observation(
                reported_sinr_db=report,
                harq=Harq(record.ack) if record.scheduled else None,
                last_mcs=st.last_mcs,
                offset_norm=float(np.clip(st.offset_accum, -cfg.offset_clip, cfg.offset_clip)) / cfg.offset_clip,
            ))

        return self._state(), result.reward, result

    def _learn(self, st: UeState, mcs: int, harq: Harq) -> None:
        cfg = self.config
        nack = int(harq == Harq.NACK)
        st.harq_window.appendleft(int(harq))
        st.bler_window.append(nack)
        st.last_mcs = mcs
        st.scheduled += 1
        st.acks += 1 - nack
        st.offset_accum += cfg.ack_step if not nack else -cfg.nack_step
        st.penalty_integral += nack - cfg.tau
        st.lam = max(0.0, cfg.k_e * st.penalty_integral)

    def expected_reward(self, sinr_db: Sequence[float], action: Sequence[int],
                        scheduled: Optional[Iterable[int]] = None) -> float:
        """Closed-form mean of the k_E = 0 reward for fixed SINRs and action"""
        mcs = self._check_action(action) if self.ues else [self.catalog.check_index(a) for a in action]
        ues = range(len(mcs)) if scheduled is None else scheduled
        total = 0.0
        for ue in ues:
            p_error = float(bler(self.config.bler, mcs[ue], sinr_db[ue], self.catalog))
            total += self.catalog.se_nom(mcs[ue]) * (1.0 - p_error)
        return total


def slot_log_frame(records: Iterable[UeSlotRecord], episode: Optional[Sequence[int]] = None) -> pd.DataFrame:
    rows = [asdict(r) for r in records]
    frame = pd.DataFrame(rows, columns=[c if c != "lambda" else "lam" for c in SLOT_LOG_COLUMNS])
    frame = frame.rename(columns={"lam": "lambda"})
    frame["scheduled"] = frame["scheduled"].astype(int)
    if episode is not None:
        frame.insert(0, "episode", list(episode))
    return frame


def write_slot_log(records: Iterable[UeSlotRecord], path: Union[str, Path],
                   episode: Optional[Sequence[int]] = None) -> Path:
    """Per-(slot, UE) CSV log; ``episode`` adds a leading episode column"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    slot_log_frame(records, episode).to_csv(path, index=False, float_format="%.7f")
    return path


def run_episode(env: LinkAdaptationEnv, state: np.ndarray, act, rng: np.random.Generator,
                observe=None) -> List[float]:
    """Step ``env`` to the end of its episode; ``act(env, state, rng)`` picks the action"""
    rewards = []
    while not env.done:
        action = act(env, state, rng)
        state, reward, result = env.step(action, rng)
        if observe is not None:
            observe(result)
        rewards.append(reward)
    return rewards
