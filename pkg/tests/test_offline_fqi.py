import numpy as np
import pandas as pd
import pytest

from exceptions import DatasetError, DatasetSchemaError
from offline_fqi import (
    DATASET_COLUMNS,
    LoggedDataset,
    cqi_index,
    extract_policy,
    fqi_train,
    load_dataset,
    synthesize_dataset,
    total_variation,
    write_dataset,
    write_fqi_curve,
    write_fqi_policy,
)
from schemas import ChannelScenario, FqiConfig


def _toy_frame(n=1500, seed=0):
    """Reward 1 only for MCS 5, whatever the state"""
    rng = np.random.default_rng(seed)
    mcs = rng.integers(0, 29, n)
    return pd.DataFrame({
        "cqi": rng.integers(0, 16, n),
        "rsrp": rng.uniform(-110, -70, n),
        "bler_inst": rng.uniform(0, 1, n),
        "mcs": mcs,
        "reward": (mcs == 5).astype(float),
        "next_cqi": rng.integers(0, 16, n),
        "next_rsrp": rng.uniform(-110, -70, n),
        "next_bler": rng.uniform(0, 1, n),
        "direction": np.where(rng.random(n) < 0.5, "DL", "UL"),
    }, columns=DATASET_COLUMNS)


FAST = FqiConfig(n_estimators=10, iterations=5, seed=0)


# Loading

def test_load_dataset_drops_rows_without_successor(tmp_path):
    frame = _toy_frame(20)
    frame.loc[[4, 9], "next_cqi"] = np.nan
    path = tmp_path / "logged.csv"
    frame.to_csv(path, index=False)
    dataset = load_dataset(path)
    assert len(dataset) == 18
    assert dataset.dropped_rows == 2


def test_load_dataset_missing_columns(tmp_path):
    path = tmp_path / "logged.csv"
    _toy_frame(5).drop(columns=["reward", "direction"]).to_csv(path, index=False)
    with pytest.raises(DatasetSchemaError) as info:
        load_dataset(path)
    assert info.value.missing_columns == ["reward", "direction"]


def test_load_dataset_reports_invalid_line(tmp_path):
    frame = _toy_frame(10)
    frame.loc[6, "bler_inst"] = 1.5
    path = tmp_path / "logged.csv"
    frame.to_csv(path, index=False)
    with pytest.raises(DatasetError) as info:
        load_dataset(path)
    assert info.value.line == 8
    assert "bler_inst" in str(info.value)


def test_load_dataset_rejects_unknown_direction(tmp_path):
    frame = _toy_frame(3)
    frame.loc[0, "direction"] = "SL"
    path = tmp_path / "logged.csv"
    frame.to_csv(path, index=False)
    with pytest.raises(DatasetError):
        load_dataset(path)


# Training

def test_fqi_curve_length_and_growth():
    dataset = LoggedDataset(_toy_frame())
    q, curve = fqi_train(dataset, config=FqiConfig(n_estimators=10, iterations=6, gamma=0.5))
    assert len(curve) == 6
    assert q.iteration == 5
    # bootstrapped values grow toward r / (1 - gamma)
    assert curve[-1] > curve[0]


def test_fqi_without_discount_is_reward_regression():
    dataset = LoggedDataset(_toy_frame())
    _, curve = fqi_train(dataset, config=FqiConfig(n_estimators=10, iterations=3, gamma=0.0))
    assert np.allclose(curve, curve[0])
    assert curve[0] == pytest.approx(dataset.rewards.mean(), abs=0.02)


def test_fqi_curve_settles_and_stays_bounded():
    dataset = LoggedDataset(_toy_frame(600))
    gamma = 0.5
    q, curve = fqi_train(dataset, config=FqiConfig(n_estimators=10, iterations=30, gamma=gamma))
    assert len(q.leaf_values) == 10
    # leaf means over the training rows average back to the targets
    assert curve[0] == pytest.approx(dataset.rewards.mean(), rel=1e-9)
    tail = np.asarray(curve[-5:])
    assert np.all(np.abs(np.diff(tail)) / np.abs(tail[:-1]) < 1e-3)
    assert np.all(np.diff(curve) >= -1e-12)
    assert max(curve) < dataset.rewards.max() / (1 - gamma)


def test_greedy_policy_finds_rewarding_mcs():
    dataset = LoggedDataset(_toy_frame())
    q, _ = fqi_train(dataset, config=FAST)
    learned, behavior = extract_policy(q, dataset)
    assert learned.sum() == pytest.approx(1.0)
    assert behavior.sum() == pytest.approx(1.0)
    assert learned[5] == pytest.approx(1.0)
    assert total_variation(learned, behavior) == pytest.approx(1.0 - behavior[5])


def test_q_all_shape():
    dataset = LoggedDataset(_toy_frame(200))
    q, _ = fqi_train(dataset, config=FAST)
    assert q.q_all(dataset.states[:7]).shape == (7, 29)


def test_empty_dataset():
    with pytest.raises(DatasetError):
        fqi_train(LoggedDataset(_toy_frame(0)))


def test_total_variation():
    assert total_variation([1.0, 0.0], [0.0, 1.0]) == pytest.approx(1.0)
    assert total_variation([0.3, 0.7], [0.3, 0.7]) == 0.0


# Logged data synthesis

@pytest.mark.parametrize("sinr, expected", [(-20.0, 0), (-6.0, 0), (8.0, 7), (8.9, 7), (40.0, 15)])
def test_cqi_index(sinr, expected):
    assert cqi_index(sinr) == expected


def test_synthesized_dataset_layout(tmp_path):
    scenario = ChannelScenario(num_ues=2, mean_sinr_db=[20.0, 5.0], num_slots=60)
    frame = synthesize_dataset(scenario, seed=1)
    assert list(frame.columns) == DATASET_COLUMNS
    assert len(frame) == 120
    assert set(frame["direction"]) == {"DL", "UL"}
    assert frame["next_cqi"].isna().sum() == 2
    assert frame["reward"].min() >= 0.0
    # rsrp is the report shifted by the noise floor
    assert np.allclose((frame["rsrp"] + 100.0) % 1.0, 0.0)

    path = write_dataset(frame, tmp_path / "logged.csv")
    dataset = load_dataset(path)
    assert dataset.dropped_rows == 2
    assert len(dataset) == 118


def test_fqi_output_files(tmp_path):
    curve_path = write_fqi_curve([0.1, 0.2], tmp_path / "fqi_curve.csv")
    assert list(pd.read_csv(curve_path).columns) == ["iteration", "avg_q"]
    learned = np.zeros(29)
    learned[3] = 1.0
    policy = pd.read_csv(write_fqi_policy(learned, np.full(29, 1 / 29), tmp_path / "fqi_policy.csv"))
    assert policy.loc[3, "learned_pct"] == pytest.approx(100.0)
    assert policy["behavior_pct"].sum() == pytest.approx(100.0, abs=1e-3)


def test_single_transition_fixed_point():
    frame = pd.DataFrame([{
        "cqi": 7, "rsrp": -90.0, "bler_inst": 0.1, "mcs": 9, "reward": 1.2,
        "next_cqi": 7, "next_rsrp": -90.0, "next_bler": 0.1, "direction": "DL",
    }] * 10, columns=DATASET_COLUMNS)
    gamma = 0.5
    _, curve = fqi_train(LoggedDataset(frame), config=FqiConfig(n_estimators=5, iterations=30, gamma=gamma))
    assert curve[-1] == pytest.approx(1.2 / (1 - gamma), rel=0.01)
    assert max(curve) <= 1.2 / (1 - gamma) + 1e-9
