"""
PHY abstraction: (MCS, SINR) -> BLER -> HARQ outcome, and the delayed,
quantized effective-SINR report that stands in for CQI.

BLER follows a logistic curve centred on a Shannon-derived threshold
gamma50(m) = 10*log10(2^SE(m) - 1) + L with steepness k per dB.
"""
from enum import IntEnum
from typing import Optional, Union

import numpy as np
from scipy.special import expit

from mcs_catalog import McsCatalog, get_catalog
from schemas import BlerModel, FeedbackConfig

ArrayLike = Union[float, np.ndarray]


class Harq(IntEnum):
    """HARQ window encoding: unscheduled, NACK, ACK"""
    UNSCHEDULED = -1
    NACK = 0
    ACK = 1


def threshold_db(model: BlerModel, mcs, catalog: Optional[McsCatalog] = None) -> ArrayLike:
    """SINR (dB) at which the BLER of ``mcs`` equals 0.5"""
    catalog = catalog or get_catalog()
    if np.ndim(mcs) == 0:
        se = catalog.se_nom(mcs)
    else:
        se = catalog.se_table[np.asarray(mcs, dtype=int)]
    return 10.0 * np.log10(np.power(2.0, se) - 1.0) + model.impl_loss_db


def bler(model: BlerModel, mcs, sinr_db: ArrayLike, catalog: Optional[McsCatalog] = None) -> ArrayLike:
    """Block error probability 1 / (1 + exp(k * (sinr - gamma50(mcs))))"""
    gamma50 = threshold_db(model, mcs, catalog)
    return expit(-model.slope_per_db * (np.asarray(sinr_db, dtype=float) - gamma50))


def bler_all(model: BlerModel, sinr_db: float, catalog: Optional[McsCatalog] = None) -> np.ndarray:
    """BLER of every MCS at one SINR"""
    catalog = catalog or get_catalog()
    return bler(model, np.arange(len(catalog)), sinr_db, catalog)


def expected_se(model: BlerModel, mcs, sinr_db: ArrayLike, catalog: Optional[McsCatalog] = None) -> ArrayLike:
    """se_nom(m) * (1 - BLER(m, sinr))"""
    catalog = catalog or get_catalog()
    se = catalog.se_table[np.asarray(mcs, dtype=int)]
    return se * (1.0 - bler(model, mcs, sinr_db, catalog))


def best_expected_mcs(model: BlerModel, sinr_db: float, catalog: Optional[McsCatalog] = None) -> int:
    """Brute-force maximizer of the expected spectral efficiency"""
    catalog = catalog or get_catalog()
    values = expected_se(model, np.arange(len(catalog)), sinr_db, catalog)
    return int(np.argmax(values))


def select_highest_mcs(model: BlerModel, sinr_db: float, target: float,
                       catalog: Optional[McsCatalog] = None) -> int:
    """Largest MCS with BLER <= target at ``sinr_db``; 0 if none qualifies"""
    eligible = np.flatnonzero(bler_all(model, sinr_db, catalog) <= target)
    return int(eligible[-1]) if eligible.size else 0


def sample_harq(model: BlerModel, mcs: int, sinr_db: float, rng: np.random.Generator,
                catalog: Optional[McsCatalog] = None) -> Harq:
    """Draw ACK with probability 1 - BLER"""
    p_error = float(bler(model, mcs, sinr_db, catalog))
    return Harq.ACK if rng.random() >= p_error else Harq.NACK


def quantize_db(value: float, step_db: float) -> float:
    if step_db <= 0:
        return float(value)
    # round half up to the nearest step multiple
    return float(np.floor(value / step_db + 0.5) * step_db)


def report_effective_sinr(trace, cfg: FeedbackConfig, slot: int, ue: int) -> float:
    """SINR report available at ``slot``: true SINR of slot max(0, t - d), quantized"""
    source = min(max(0, slot - cfg.report_delay_slots), trace.num_slots - 1)
    return quantize_db(trace.at(ue, source), cfg.quant_step_db)
