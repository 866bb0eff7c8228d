"""
Aggregation of per-slot records into MetricsSummary plus the plot-ready
CSV tables (summary rows, CDFs at fixed quantiles, MCS histograms).
"""
import logging
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from exceptions import DomainError
from phy_abstraction import Harq
from schemas import NUM_MCS, ComparisonRow, MetricsSummary

logger = logging.getLogger(__name__)

CDF_POINTS = 200
SUMMARY_COLUMNS = [
    "label", "method", "predictor", "k_e", "mean_se", "median_se",
    "mean_bler", "median_bler", "median_mcs", "episodes", "scheduled_slots", "state_dim",
]
COMPARISON_COLUMNS = list(ComparisonRow.model_fields)
FLOAT_FORMAT = "%.10g"


def cdf_table(values: Iterable[float], n: int = CDF_POINTS) -> List[Tuple[float, float]]:
    """(value, cumulative probability) pairs at n evenly spaced probabilities"""
    data = np.asarray(list(values), dtype=float)
    if data.size == 0:
        return []
    probs = np.linspace(1.0 / n, 1.0, n)
    quantiles = np.quantile(data, probs, method="inverted_cdf")
    return [(float(v), float(p)) for v, p in zip(quantiles, probs)]


def delta_pct(se: float, se_ref: float) -> float:
    if se_ref == 0:
        raise DomainError("reference spectral efficiency is zero")
    return 100.0 * (se - se_ref) / se_ref


def _episode_stats(records) -> Tuple[float, float]:
    scheduled = [r for r in records if r.scheduled]
    if not scheduled:
        return 0.0, 0.0
    se = float(np.mean([r.se_achieved for r in scheduled]))
    nacks = sum(r.ack == Harq.NACK for r in scheduled)
    return se, nacks / len(scheduled)


def summarize(episodes: Sequence[Sequence], label: str, method: str, num_ues: int,
              predictor: Optional[str] = None, k_e: float = 0.0,
              state_dim: Optional[int] = None, trace_digests: Optional[List[str]] = None) -> MetricsSummary:
    """
    Aggregate per-episode slot records

    Mean SE averages delivered SE over scheduled (slot, UE) records; mean
    BLER pools NACKs over scheduled records; medians of SE and BLER are
    taken over per-episode values, the median MCS over scheduled choices.
    """
    flat = [r for episode in episodes for r in episode]
    scheduled = [r for r in flat if r.scheduled]
    if not scheduled:
        raise DomainError("no scheduled transmissions to summarize")

    se_values = np.array([r.se_achieved for r in scheduled])
    nack = np.array([r.ack == Harq.NACK for r in scheduled])
    mcs = np.array([r.mcs for r in scheduled])
    ue_of = np.array([r.ue for r in scheduled])

    per_episode = [_episode_stats(ep) for ep in episodes]
    per_ue_se, per_ue_bler, histogram = [], [], []
    for ue in range(num_ues):
        mask = ue_of == ue
        per_ue_se.append(float(se_values[mask].mean()) if mask.any() else 0.0)
        per_ue_bler.append(float(nack[mask].mean()) if mask.any() else 0.0)
        histogram.append(np.bincount(mcs[mask], minlength=NUM_MCS).astype(int).tolist())

    # BLER CDF over (episode, UE) cells
    cell_bler = []
    for episode in episodes:
        for ue in range(num_ues):
            cell = [r.ack == Harq.NACK for r in episode if r.scheduled and r.ue == ue]
            if cell:
                cell_bler.append(float(np.mean(cell)))

    logger.debug("Summarized %s: %d episodes, %d scheduled records", label, len(episodes), len(scheduled))
    return MetricsSummary(
        label=label,
        method=method,
        predictor=predictor,
        k_e=k_e,
        mean_se=float(se_values.mean()),
        median_se=float(np.median([s for s, _ in per_episode])),
        mean_bler=float(nack.mean()),
        median_bler=float(np.median([b for _, b in per_episode])),
        median_mcs=float(np.median(mcs)),
        per_ue_mean_se=per_ue_se,
        per_ue_bler=per_ue_bler,
        mcs_histogram=histogram,
        cdf_se=cdf_table(se_values),
        cdf_bler=cdf_table(cell_bler),
        cdf_mcs=cdf_table(mcs),
        episodes=len(episodes),
        scheduled_slots=len(scheduled),
        state_dim=state_dim,
        trace_digests=list(trace_digests or []),
    )


def recompute_mean_se(slot_log: pd.DataFrame) -> float:
    """Mean delivered SE straight from a slot log frame"""
    scheduled = slot_log[slot_log["scheduled"] == 1]
    return float(scheduled["se_achieved"].mean())


def _prepare(path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def write_summary_csv(summaries: Sequence[MetricsSummary], path: Union[str, Path]) -> Path:
    path = _prepare(path)
    rows = [s.model_dump(include=set(SUMMARY_COLUMNS)) for s in summaries]
    pd.DataFrame(rows, columns=SUMMARY_COLUMNS).to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def write_cdf_csv(summaries: Sequence[MetricsSummary], kind: str, path: Union[str, Path]) -> Path:
    """Long-format CDF table: label,value,cumulative_prob"""
    path = _prepare(path)
    rows = [
        {"label": s.label, "value": v, "cumulative_prob": p}
        for s in summaries
        for v, p in getattr(s, f"cdf_{kind}")
    ]
    pd.DataFrame(rows, columns=["label", "value", "cumulative_prob"]).to_csv(
        path, index=False, float_format=FLOAT_FORMAT
    )
    return path


def write_histogram_csv(summaries: Sequence[MetricsSummary], path: Union[str, Path]) -> Path:
    path = _prepare(path)
    rows = [
        {"label": s.label, "ue": ue, "mcs": m, "count": count}
        for s in summaries
        for ue, counts in enumerate(s.mcs_histogram)
        for m, count in enumerate(counts)
    ]
    pd.DataFrame(rows, columns=["label", "ue", "mcs", "count"]).to_csv(path, index=False)
    return path


def write_comparison_csv(rows: Sequence[ComparisonRow], path: Union[str, Path]) -> Path:
    path = _prepare(path)
    frame = pd.DataFrame([r.model_dump() for r in rows], columns=COMPARISON_COLUMNS)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path
