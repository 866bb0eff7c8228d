"""
Per-UE true post-equalization SINR sequences.

The large-scale part is a dB-domain Gauss-Markov (AR(1)) process around the
UE mean; optional fast fading multiplies the linear SINR by |h_t|^2 where
h_t is a unit-variance complex AR(1) gain. Traces can also be loaded from
CSV files (``slot,ue,sinr_db``), e.g. replayed ray-tracing logs.
"""
import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np
import pandas as pd
from scipy.signal import lfilter

from exceptions import ConfigError, TraceParseError
from schemas import ChannelScenario

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["slot", "ue", "sinr_db"]
FADING_FLOOR = 1e-10

SCENARIOS: Dict[str, dict] = {
    "cell-3ue": {"num_ues": 3, "mean_sinr_db": [26.0, 6.0, 28.0]},
    "single-ue-mid": {"num_ues": 1, "mean_sinr_db": [8.0]},
    "stationary": {
        "num_ues": 3,
        "mean_sinr_db": [26.0, 6.0, 28.0],
        "shadow_sigma_db": 0.0,
        "fast_fading": False,
    },
}
# same UE means with slower fading; delayed reports stay informative
SCENARIOS["paper-3ue"] = {**SCENARIOS["cell-3ue"], "doppler_corr": 0.985}


@dataclass(frozen=True)
class SinrTrace:
    """True SINR per (ue, slot) in dB"""
    sinr_db: np.ndarray
    realization: int = 0
    shadow_db: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        values = np.array(self.sinr_db, dtype=float)
        if values.ndim != 2:
            raise TraceParseError("trace must be a (num_ues, num_slots) array")
        if not np.all(np.isfinite(values)):
            raise TraceParseError("trace contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "sinr_db", values)

    @property
    def num_ues(self) -> int:
        return self.sinr_db.shape[0]

    @property
    def num_slots(self) -> int:
        return self.sinr_db.shape[1]

    def at(self, ue: int, slot: int) -> float:
        return float(self.sinr_db[ue, slot])


def get_scenario(name: str, **overrides) -> ChannelScenario:
    """Build a named scenario, optionally overriding fields"""
    if name not in SCENARIOS:
        raise ConfigError(f"unknown scenario '{name}' (known: {', '.join(sorted(SCENARIOS))})")
    params = {"name": name, **SCENARIOS[name], **overrides}
    return ChannelScenario(**params)


def _rng(scenario: ChannelScenario, realization: int) -> np.random.Generator:
    return np.random.default_rng([scenario.seed, realization])


def generate(scenario: ChannelScenario, realization: int = 0) -> SinrTrace:
    """
    Generate one channel realization

    Deterministic given (scenario.seed, realization).
    """
    rng = _rng(scenario, realization)
    num_ues, num_slots = scenario.num_ues, scenario.num_slots
    mu = np.asarray(scenario.mean_sinr_db, dtype=float)[:, None]
    rho, sigma = scenario.shadow_rho, scenario.shadow_sigma_db

    # gamma_0 = mu; x_{t+1} = rho * x_t + sigma * sqrt(1 - rho^2) * eps_t
    drive = np.zeros((num_ues, num_slots))
    drive[:, 1:] = sigma * np.sqrt(1.0 - rho ** 2) * rng.standard_normal((num_ues, num_slots - 1))
    shadow = mu + lfilter([1.0], [1.0, -rho], drive, axis=1)

    sinr = shadow.copy()
    if scenario.fast_fading:
        c = scenario.doppler_corr
        noise = (rng.standard_normal((num_ues, num_slots))
                 + 1j * rng.standard_normal((num_ues, num_slots))) / np.sqrt(2.0)
        drive = np.sqrt(1.0 - c ** 2) * noise
        drive[:, 0] = noise[:, 0]  # h_0 ~ CN(0, 1)
        gain = lfilter([1.0], [1.0, -c], drive, axis=1)
        power = np.maximum(np.abs(gain) ** 2, FADING_FLOOR)
        sinr = shadow + 10.0 * np.log10(power)

    return SinrTrace(sinr_db=sinr, realization=realization, shadow_db=shadow)


def load_trace(path: Union[str, Path], realization: int = 0) -> SinrTrace:
    """Load a dense ``slot,ue,sinr_db`` trace file"""
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except pd.errors.EmptyDataError:
        raise TraceParseError(f"{path}: empty trace file")
    missing = [c for c in TRACE_COLUMNS if c not in frame.columns]
    if missing:
        raise TraceParseError(f"{path}: missing columns {', '.join(missing)}", line=1)
    if frame.empty:
        raise TraceParseError(f"{path}: trace has no rows")

    # header is line 1
    for position, row in enumerate(frame[TRACE_COLUMNS].itertuples(index=False)):
        line = position + 2
        slot, ue, value = row
        try:
            slot, ue = float(slot), float(ue)
        except (TypeError, ValueError):
            raise TraceParseError("slot and ue must be integers", line=line)
        if not (np.isfinite(slot) and np.isfinite(ue)) or not (slot.is_integer() and ue.is_integer()):
            raise TraceParseError("slot and ue must be integers", line=line)
        if int(slot) < 0 or int(ue) < 0:
            raise TraceParseError("slot and ue must be non-negative", line=line)
        try:
            value = float(value)
        except (TypeError, ValueError):
            raise TraceParseError(f"sinr_db '{value}' is not a number", line=line)
        if not np.isfinite(value):
            raise TraceParseError(f"non-finite sinr_db '{row[2]}'", line=line)

    slots = frame["slot"].astype(int).to_numpy()
    ues = frame["ue"].astype(int).to_numpy()
    values = frame["sinr_db"].astype(float).to_numpy()
    num_slots, num_ues = slots.max() + 1, ues.max() + 1

    sinr = np.full((num_ues, num_slots), np.nan)
    seen = np.zeros((num_ues, num_slots), dtype=bool)
    for position, (slot, ue, value) in enumerate(zip(slots, ues, values)):
        if seen[ue, slot]:
            raise TraceParseError(f"duplicate cell (slot={slot}, ue={ue})", line=position + 2)
        seen[ue, slot] = True
        sinr[ue, slot] = value

    if not seen.all():
        ue, slot = np.argwhere(~seen)[0]
        raise TraceParseError(
            f"{path}: missing cell (slot={slot}, ue={ue}); inconsistent UE count or slot range",
            line=len(frame) + 1,
        )

    logger.debug("Loaded trace %s: %d UEs x %d slots", path, num_ues, num_slots)
    return SinrTrace(sinr_db=sinr, realization=realization)


def write_trace(trace: SinrTrace, path: Union[str, Path]) -> Path:
    """Write a trace in the canonical ``slot,ue,sinr_db`` format"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    slots, ues = np.meshgrid(np.arange(trace.num_slots), np.arange(trace.num_ues))
    frame = pd.DataFrame({
        "slot": slots.T.ravel(),
        "ue": ues.T.ravel(),
        "sinr_db": trace.sinr_db.T.ravel(),
    })
    frame.to_csv(path, index=False)
    return path


def trace_digest(trace: SinrTrace) -> str:
    """SHA-256 of the trace values, used to pair runs across methods"""
    data = np.ascontiguousarray(trace.sinr_db, dtype="<f8")
    return hashlib.sha256(data.tobytes()).hexdigest()
