"""
Rule-based link adaptation baselines: OLLA and a SALAD-style controller.

The SALAD controller is a reconstruction: recursive ACK/NACK-driven SINR
estimate, windowed bias score that enlarges the step when the estimate is
off, integral control of the BLER target and random aggressive probing.
"""
import logging
from collections import deque
from typing import Deque, List, Optional

import numpy as np

from mcs_catalog import McsCatalog, get_catalog
from phy_abstraction import Harq, select_highest_mcs
from schemas import BlerModel, OllaConfig, SaladConfig

logger = logging.getLogger(__name__)


class OllaController:
    """Per-UE SINR offset driven by HARQ feedback"""

    def __init__(self, config: OllaConfig, bler_model: BlerModel, num_ues: int = 1,
                 catalog: Optional[McsCatalog] = None):
        self.config = config
        self.bler_model = bler_model
        self.catalog = catalog or get_catalog()
        self.offset_db = np.zeros(num_ues)

    @property
    def delta_ack_db(self) -> float:
        return self.config.delta_ack_db

    @property
    def delta_nack_db(self) -> float:
        return self.config.delta_nack_db

    def select(self, reported_sinr_db: float, ue: int = 0) -> int:
        """Highest MCS meeting the BLER target at report + offset"""
        sinr = reported_sinr_db + self.offset_db[ue]
        return select_highest_mcs(self.bler_model, sinr, self.config.target_bler, self.catalog)

    def update(self, harq: Harq, ue: int = 0) -> float:
        if harq == Harq.ACK:
            self.offset_db[ue] += self.delta_ack_db
        elif harq == Harq.NACK:
            self.offset_db[ue] -= self.delta_nack_db
        limit = self.config.offset_limit_db
        if abs(self.offset_db[ue]) > limit:
            logger.debug("OLLA offset of UE %d saturated at %+.1f dB", ue, np.sign(self.offset_db[ue]) * limit)
        self.offset_db[ue] = np.clip(self.offset_db[ue], -limit, limit)
        return float(self.offset_db[ue])


def olla_select(state: OllaController, reported_sinr_db: float, ue: int = 0) -> int:
    return state.select(reported_sinr_db, ue)


def olla_update(state: OllaController, harq: Harq, ue: int = 0) -> OllaController:
    state.update(harq, ue)
    return state


class SaladController:
    """
    Self-adapting SINR estimate and BLER target for one UE

    Call ``step`` once per slot with the latest HARQ outcome (or ``None``
    when the UE was not scheduled); it returns the next MCS.
    """

    def __init__(self, config: SaladConfig, bler_model: BlerModel, catalog: Optional[McsCatalog] = None,
                 initial_sinr_db: Optional[float] = None):
        self.config = config
        self.bler_model = bler_model
        self.catalog = catalog or get_catalog()
        self.sinr_est_db = config.initial_sinr_db if initial_sinr_db is None else initial_sinr_db
        self.tau = config.bler_target
        self.scores: Deque[float] = deque(maxlen=config.score_window)
        self.outcomes: Deque[int] = deque(maxlen=config.score_window)
        self.bias_score = 0.0
        self.last_step_db = 0.0
        self.last_probe = False
        self.probes = 0
        self.selections = 0

    def _learn(self, harq: Harq) -> None:
        cfg = self.config
        nack = int(harq == Harq.NACK)

        # bias score over the previous T outcomes, relative to the target in force
        self.bias_score = float(np.mean(self.scores)) if self.scores else 0.0
        scale = 1.0 + abs(self.bias_score) if abs(self.bias_score) > cfg.bias_threshold else 1.0
        step = -cfg.learning_rate * (1.0 - self.tau) if nack else cfg.learning_rate * self.tau
        self.last_step_db = scale * step
        self.sinr_est_db = float(np.clip(self.sinr_est_db + self.last_step_db, *cfg.sinr_bounds_db))

        self.scores.append(nack - self.tau)
        self.outcomes.append(nack)
        window_bler = float(np.mean(self.outcomes))
        self.tau = float(np.clip(self.tau - cfg.integral_gain * (window_bler - cfg.bler_target),
                                 *cfg.tau_bounds))

    def step(self, harq: Optional[Harq] = None, last_mcs: Optional[int] = None,
             rng: Optional[np.random.Generator] = None) -> int:
        if harq in (Harq.ACK, Harq.NACK):
            self._learn(harq)
        rng = rng if rng is not None else np.random.default_rng()
        self.last_probe = bool(rng.random() < self.config.probe_prob)
        self.probes += self.last_probe
        self.selections += 1
        target = self.config.probe_target if self.last_probe else self.tau
        return select_highest_mcs(self.bler_model, self.sinr_est_db, target, self.catalog)


def salad_step(state: SaladController, harq: Optional[Harq], last_mcs: Optional[int],
               rng: np.random.Generator):
    mcs = state.step(harq, last_mcs, rng)
    return mcs, state


class BaselinePolicy:
    """Drives OLLA or SALAD from the environment's feedback, one controller per UE"""

    def __init__(self, method: str, num_ues: int, bler_model: BlerModel,
                 olla: Optional[OllaConfig] = None, salad: Optional[SaladConfig] = None,
                 catalog: Optional[McsCatalog] = None):
        self.method = method
        self.num_ues = num_ues
        self.bler_model = bler_model
        self.catalog = catalog or get_catalog()
        self.olla_config = olla or OllaConfig()
        self.salad_config = salad or SaladConfig()
        self.olla = OllaController(self.olla_config, bler_model, num_ues, self.catalog)
        self.salad: List[Optional[SaladController]] = [None] * num_ues
        self._pending: List[Optional[Harq]] = [None] * num_ues
        self._last_mcs: List[int] = [0] * num_ues

    def act(self, env, rng: np.random.Generator) -> List[int]:
        action = []
        for ue, st in enumerate(env.ues):
            if self.method == "olla":
                mcs = self.olla.select(st.last_report_db, ue)
            else:
                if self.salad[ue] is None:
                    self.salad[ue] = SaladController(self.salad_config, self.bler_model, self.catalog,
                                                     initial_sinr_db=st.last_report_db)
                mcs = self.salad[ue].step(self._pending[ue], self._last_mcs[ue], rng)
                self._pending[ue] = None
            action.append(mcs)
        self._last_mcs = action
        return action

    def observe(self, result) -> None:
        for record in result.records:
            if not record.scheduled:
                continue
            harq = Harq(record.ack)
            if self.method == "olla":
                self.olla.update(harq, record.ue)
            else:
                self._pending[record.ue] = harq
