"""
Fitted Q-iteration on logged link-adaptation measurements.

State features are (cqi, rsrp, bler_inst) used raw; the MCS enters the
regressor as one extra integer feature. Each Bellman iteration refits the
leaf values of a random forest on r + gamma * max_a Q_prev(s', a).
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError
from sklearn.ensemble import RandomForestRegressor

from baselines import OllaController
from channel_model import generate
from exceptions import DatasetError, DatasetSchemaError
from mcs_catalog import McsCatalog, get_catalog
from phy_abstraction import Harq, report_effective_sinr, sample_harq
from schemas import (
    NUM_MCS, BlerModel, ChannelScenario, FeedbackConfig, FqiConfig, LoggedSample, OllaConfig,
)

logger = logging.getLogger(__name__)

DATASET_COLUMNS = list(LoggedSample.model_fields)
STATE_COLUMNS = ["cqi", "rsrp", "bler_inst"]
NEXT_COLUMNS = ["next_cqi", "next_rsrp", "next_bler"]


@dataclass
class LoggedDataset:
    frame: pd.DataFrame
    dropped_rows: int = 0

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def states(self) -> np.ndarray:
        return self.frame[STATE_COLUMNS].to_numpy(dtype=float)

    @property
    def next_states(self) -> np.ndarray:
        return self.frame[NEXT_COLUMNS].to_numpy(dtype=float)

    @property
    def actions(self) -> np.ndarray:
        return self.frame["mcs"].to_numpy(dtype=int)

    @property
    def rewards(self) -> np.ndarray:
        return self.frame["reward"].to_numpy(dtype=float)


def load_dataset(path: Union[str, Path]) -> LoggedDataset:
    """Read and validate a logged CSV; rows without a successor are dropped"""
    try:
        frame = pd.read_csv(path)
    except pd.errors.EmptyDataError:
        raise DatasetError(f"{path}: empty dataset file")
    missing = [c for c in DATASET_COLUMNS if c not in frame.columns]
    if missing:
        raise DatasetSchemaError(missing)

    frame = frame[DATASET_COLUMNS]
    no_successor = frame[NEXT_COLUMNS].isna().any(axis=1)
    dropped = int(no_successor.sum())
    if dropped:
        logger.warning("%s: dropped %d rows without successor state", path, dropped)

    rows = []
    # header is line 1
    for position, record in enumerate(frame.to_dict(orient="records")):
        if no_successor.iloc[position]:
            continue
        try:
            rows.append(LoggedSample(**record).model_dump())
        except ValidationError as exc:
            fields = ", ".join(str(err["loc"][0]) for err in exc.errors() if err["loc"])
            raise DatasetError(f"invalid value in {fields or 'row'}", line=position + 2) from exc

    return LoggedDataset(frame=pd.DataFrame(rows, columns=DATASET_COLUMNS), dropped_rows=dropped)


class QEnsemble:
    """
    Q(s, a) over [state features, action]

    The forest only supplies the partition of the feature space; Q values
    are read from ``leaf_values`` (one array per tree indexed by node id)
    and averaged over trees. Without leaf values the forest's own
    predictions are used.
    """

    def __init__(self, model, gamma: float, iteration: int = 0, num_actions: int = NUM_MCS,
                 leaf_values: Optional[List[np.ndarray]] = None):
        self.model = model
        self.gamma = gamma
        self.iteration = iteration
        self.num_actions = num_actions
        self.leaf_values = leaf_values

    def predict(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        features = np.column_stack([states, actions])
        if self.leaf_values is None:
            return self.model.predict(features)
        leaves = self.model.apply(features)
        per_tree = [values[leaves[:, t]] for t, values in enumerate(self.leaf_values)]
        return np.mean(per_tree, axis=0)

    def q_all(self, states: np.ndarray) -> np.ndarray:
        """(n, num_actions) table of Q values"""
        n = len(states)
        tiled = np.repeat(states, self.num_actions, axis=0)
        actions = np.tile(np.arange(self.num_actions), n)
        return self.predict(tiled, actions).reshape(n, self.num_actions)


def _forest(config: FqiConfig) -> RandomForestRegressor:
    return RandomForestRegressor(
        n_estimators=config.n_estimators,
        max_depth=config.max_depth,
        min_samples_leaf=config.min_samples_leaf,
        random_state=config.seed,
        n_jobs=config.n_jobs,
    )


def leaf_means(model: RandomForestRegressor, leaves: np.ndarray, targets: np.ndarray) -> List[np.ndarray]:
    """Per-tree mean target of the training rows that land in each node"""
    values = []
    for t, tree in enumerate(model.estimators_):
        size = tree.tree_.node_count
        counts = np.bincount(leaves[:, t], minlength=size)
        sums = np.bincount(leaves[:, t], weights=targets, minlength=size)
        values.append(np.divide(sums, counts, out=np.zeros(size), where=counts > 0))
    return values


def fqi_train(dataset: LoggedDataset, iterations: Optional[int] = None,
              config: Optional[FqiConfig] = None) -> Tuple[QEnsemble, List[float]]:
    """
    Bellman iterations; returns the last Q ensemble and the dataset-average Q per iteration

    The forest is grown once on the immediate rewards. Later iterations keep
    its partition and only refit the leaf values to the new targets, so each
    step is a gamma-contraction and the curve settles geometrically.
    """
    config = config or FqiConfig()
    iterations = iterations or config.iterations
    if len(dataset) == 0:
        raise DatasetError("dataset has no usable rows")

    states, actions, rewards = dataset.states, dataset.actions, dataset.rewards
    next_states = dataset.next_states
    features = np.column_stack([states, actions])
    model = _forest(config).fit(features, rewards)
    leaves = model.apply(features)

    targets = rewards
    curve: List[float] = []
    q = None
    for iteration in range(iterations):
        q = QEnsemble(model, config.gamma, iteration, leaf_values=leaf_means(model, leaves, targets))
        curve.append(float(q.predict(states, actions).mean()))
        logger.debug("FQI iteration %d: avg Q %.6f", iteration, curve[-1])
        if config.gamma > 0:
            targets = rewards + config.gamma * q.q_all(next_states).max(axis=1)
    return q, curve


def extract_policy(q: QEnsemble, dataset: LoggedDataset) -> Tuple[np.ndarray, np.ndarray]:
    """Greedy-action and logged-action relative frequencies over the MCS indices"""
    greedy = q.q_all(dataset.states).argmax(axis=1)
    learned = np.bincount(greedy, minlength=q.num_actions) / len(greedy)
    behavior = np.bincount(dataset.actions, minlength=q.num_actions) / len(dataset)
    return learned, behavior


def total_variation(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p, dtype=float) - np.asarray(q, dtype=float)).sum())


def cqi_index(sinr_db: float) -> int:
    # 2 dB per CQI step, 0..15
    return int(np.clip(np.floor((sinr_db + 6.0) / 2.0), 0, 15))


def synthesize_dataset(scenario: ChannelScenario, realization: int = 0, seed: int = 0,
                       bler_model: Optional[BlerModel] = None, feedback: Optional[FeedbackConfig] = None,
                       olla: Optional[OllaConfig] = None, bler_window: int = 10,
                       catalog: Optional[McsCatalog] = None) -> pd.DataFrame:
    """
    Log the simulator running OLLA

    The reward is the delivered spectral efficiency of the slot; RSRP is
    the reported SINR shifted by a fixed -100 dB noise floor. Even UEs are
    logged as DL, odd UEs as UL. The last slot of each UE has no successor.
    """
    bler_model = bler_model or BlerModel()
    feedback = feedback or FeedbackConfig()
    catalog = catalog or get_catalog()
    trace = generate(scenario, realization)
    rng = np.random.default_rng([seed, realization])
    controller = OllaController(olla or OllaConfig(), bler_model, trace.num_ues, catalog)

    rows = []
    for ue in range(trace.num_ues):
        outcomes: List[int] = []
        observed = []
        for slot in range(trace.num_slots):
            report = report_effective_sinr(trace, feedback, slot, ue)
            bler_inst = float(np.mean(outcomes[-bler_window:])) if outcomes else 0.0
            observed.append((cqi_index(report), report - 100.0, bler_inst))
            mcs = controller.select(report, ue)
            harq = sample_harq(bler_model, mcs, trace.at(ue, slot), rng, catalog)
            controller.update(harq, ue)
            outcomes.append(int(harq == Harq.NACK))
            reward = float(catalog.se_nom(mcs)) if harq == Harq.ACK else 0.0
            rows.append({"ue": ue, "slot": slot, "mcs": mcs, "reward": reward})

        for slot in range(trace.num_slots):
            row = rows[ue * trace.num_slots + slot]
            cqi, rsrp, bler_inst = observed[slot]
            nxt = observed[slot + 1] if slot + 1 < trace.num_slots else (None, None, None)
            row.update(cqi=cqi, rsrp=rsrp, bler_inst=bler_inst,
                       next_cqi=nxt[0], next_rsrp=nxt[1], next_bler=nxt[2],
                       direction="DL" if ue % 2 == 0 else "UL")

    return pd.DataFrame(rows, columns=DATASET_COLUMNS)


def write_dataset(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.6f")
    return path


def write_fqi_curve(curve: List[float], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame({"iteration": np.arange(len(curve)), "avg_q": curve}).to_csv(
        path, index=False, float_format="%.10g"
    )
    return path


def write_fqi_policy(learned: np.ndarray, behavior: np.ndarray, path: Union[str, Path]) -> Path:
    """Histograms in percent"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame({
        "mcs": np.arange(len(learned)),
        "learned_pct": 100.0 * np.asarray(learned),
        "behavior_pct": 100.0 * np.asarray(behavior),
    })
    frame.to_csv(path, index=False, float_format="%.6g")
    return path
