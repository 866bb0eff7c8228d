import numpy as np
import pandas as pd
import pytest

from channel_model import SinrTrace
from exceptions import ConfigError, DomainError, EpisodeFinishedError
from la_env import (
    SLOT_LOG_COLUMNS,
    LinkAdaptationEnv,
    run_episode,
    schedule,
    slot_log_frame,
    write_slot_log,
)
from phy_abstraction import threshold_db
from schemas import EnvConfig, FeedbackConfig, SchedulerConfig


def _env(**overrides) -> LinkAdaptationEnv:
    params = {"feedback": FeedbackConfig(report_delay_slots=1, quant_step_db=1.0)}
    params.update(overrides)
    return LinkAdaptationEnv(EnvConfig(**params))


# State layout

@pytest.mark.parametrize("n_cqi, n_harq, expected", [(3, 10, 54), (1, 1, 21)])
def test_state_dimension(make_trace, n_cqi, n_harq, expected):
    env = _env(n_cqi=n_cqi, n_harq=n_harq)
    state = env.reset(make_trace([26.0, 6.0, 28.0]))
    assert env.state_dim == expected
    assert state.shape == (expected,)


def test_neutral_initial_state(make_trace):
    env = _env()
    state = env.reset(make_trace([10.0]))
    # oracle estimate, 3 reports, 10 HARQ slots, mcs, bler, offset, ack rate
    assert state[0] == pytest.approx(0.4)
    assert np.allclose(state[1:4], 0.4)
    assert np.all(state[4:14] == -1)
    assert np.allclose(state[14:], 0.0)


def test_state_is_bounded(make_trace, rng):
    env = _env()
    state = env.reset(make_trace([60.0, -30.0], num_slots=20), rng=rng)
    assert np.all((state >= -1) & (state <= 1))
    for _ in range(10):
        state, _, _ = env.step([28, 0])
        assert np.all((state >= -1) & (state <= 1))


def test_cqi_window_follows_delayed_reports(rng):
    trace = SinrTrace(sinr_db=np.array([[0.0, 10.0, 20.0, 30.0, 40.0]]))
    env = _env()
    env.reset(trace, rng=rng)
    env.step([0])
    state, _, _ = env.step([0])
    # slot 2 sees the report of slot 1
    assert np.allclose(state[1:4], [0.4, 0.2, 0.2])
    assert state[0] == pytest.approx(0.6)


# Rewards and HARQ

def test_certain_ack_reward(make_trace, catalog, rng):
    env = _env()
    env.reset(make_trace([40.0, 40.0, 40.0]), rng=rng)
    state, reward, result = env.step([0, 0, 0])
    assert reward == pytest.approx(3 * catalog.se_nom(0))
    assert all(r.ack == 1 for r in result.records)
    per_ue = env.per_ue_dim
    assert state[4] == 1 and state[4 + per_ue] == 1
    assert state[14] == pytest.approx(0.0)
    # ack rate
    assert state[17] == pytest.approx(1.0)


def test_certain_nack_without_penalty(make_trace, rng):
    env = _env()
    env.reset(make_trace([-10.0]), rng=rng)
    state, reward, result = env.step([28])
    assert reward == pytest.approx(0.0)
    assert result.records[0].ack == 0
    assert result.records[0].se_achieved == 0.0
    assert state[4] == 0
    assert state[14] == pytest.approx(1.0)
    assert state[15] == pytest.approx(1.0)
    assert state[16] == pytest.approx(-0.9 / 5)


def test_penalty_uses_prior_nack_history(rng):
    # two NACKs, eight ACKs, then a NACK
    values = [-10.0, -10.0] + [40.0] * 8 + [-10.0, 40.0]
    env = _env(k_e=0.1, tau=0.1)
    env.reset(SinrTrace(sinr_db=np.array([values])), rng=rng)
    actions = [28, 28] + [0] * 8 + [28]
    rewards = []
    for a in actions:
        _, reward, result = env.step([a])
        rewards.append(reward)
    assert rewards[0] == pytest.approx(0.0)
    assert rewards[1] == pytest.approx(-0.09)
    assert result.records[0].lam == pytest.approx(0.1)
    assert rewards[-1] == pytest.approx(-0.1)


def test_ack_reward_ignores_penalty(rng, catalog):
    env = _env(k_e=1.0)
    env.reset(SinrTrace(sinr_db=np.array([[-10.0, 40.0, 40.0]])), rng=rng)
    env.step([28])
    _, reward, _ = env.step([5])
    assert reward == pytest.approx(catalog.se_nom(5))


def test_offset_accumulator_saturates(make_trace, rng):
    env = _env()
    env.reset(make_trace([40.0], num_slots=80), rng=rng)
    for _ in range(60):
        state, _, _ = env.step([0])
    assert env.ues[0].offset_accum == pytest.approx(6.0)
    assert state[16] == pytest.approx(1.0)


def test_expected_reward_matches_empirical_mean(catalog, bler_model):
    mcs = 10
    sinr = float(threshold_db(bler_model, mcs))
    env = _env()
    trace = SinrTrace(sinr_db=np.full((1, 4000), sinr))
    env.reset(trace, rng=np.random.default_rng(3))
    rewards = run_episode(env, None, lambda e, s, r: [mcs], np.random.default_rng(3))
    expected = env.expected_reward([sinr], [mcs])
    assert expected == pytest.approx(0.5 * catalog.se_nom(mcs))
    assert np.mean(rewards) == pytest.approx(expected, abs=0.05)


def test_same_rng_same_episode(make_trace):
    trace = make_trace([5.0, 8.0], num_slots=30)
    outcomes = []
    for _ in range(2):
        env = _env()
        env.reset(trace, rng=np.random.default_rng(11))
        rewards = run_episode(env, None, lambda e, s, r: [12, 14], np.random.default_rng(11))
        outcomes.append(rewards)
    assert outcomes[0] == outcomes[1]


# Errors

def test_step_before_reset():
    with pytest.raises(EpisodeFinishedError):
        _env().step([0])


def test_step_after_episode_end(make_trace, rng):
    env = _env()
    env.reset(make_trace([10.0], num_slots=2), rng=rng)
    env.step([0])
    env.step([0])
    assert env.done
    with pytest.raises(EpisodeFinishedError):
        env.step([0])


def test_num_slots_shortens_episode(make_trace, rng):
    env = _env()
    env.reset(make_trace([10.0], num_slots=10), rng=rng, num_slots=4)
    rewards = run_episode(env, None, lambda e, s, r: [0], rng)
    assert len(rewards) == 4


@pytest.mark.parametrize("action", [[0, 0], [29], [-1], [1.5]])
def test_invalid_action(make_trace, rng, action):
    env = _env()
    env.reset(make_trace([10.0]), rng=rng)
    with pytest.raises(DomainError):
        env.step(action)


def test_reset_rejects_ue_mismatch(make_trace):
    with pytest.raises(DomainError):
        _env().reset(make_trace([1.0, 2.0]), num_ues=3)


# Scheduling

def test_pf_picks_highest_ratio():
    cfg = SchedulerConfig(mode="pf", k=1)
    assert schedule(cfg, [1.0, 2.0, 3.0]) == [2]
    assert schedule(cfg, [1.0, 1.0, 1.0], avg_se=[1.0, 0.5, 1.0]) == [1]


def test_pf_ties_go_to_lowest_index():
    cfg = SchedulerConfig(mode="pf", k=1)
    assert schedule(cfg, [2.0, 2.0, 1.0]) == [0]
    assert schedule(SchedulerConfig(mode="pf", k=2), [1.0, 3.0, 3.0]) == [1, 2]


def test_all_schedules_everyone():
    assert schedule(SchedulerConfig(mode="all"), [0.0, 0.0, 0.0]) == [0, 1, 2]
    assert schedule(SchedulerConfig(mode="pf", k=3), [0.0, 1.0, 2.0]) == [0, 1, 2]


def test_pf_k_above_ue_count():
    with pytest.raises(ConfigError):
        schedule(SchedulerConfig(mode="pf", k=4), [1.0, 1.0, 1.0])


def test_pf_rotates_between_equal_ues(make_trace, rng):
    env = _env(scheduler=SchedulerConfig(mode="pf", k=1))
    env.reset(make_trace([20.0, 20.0, 20.0]), rng=rng)
    picked = []
    for _ in range(3):
        _, _, result = env.step([0, 0, 0])
        picked.append(int(np.flatnonzero(result.scheduled)[0]))
    assert picked == [0, 1, 2]


def test_unscheduled_ue_is_frozen(make_trace, rng):
    env = _env(scheduler=SchedulerConfig(mode="pf", k=1))
    env.reset(make_trace([20.0, 20.0, 20.0]), rng=rng)
    state, reward, result = env.step([0, 7, 9])
    skipped = result.records[1]
    assert not skipped.scheduled
    assert skipped.ack == -1
    assert skipped.mcs == 7
    assert skipped.reward == 0.0
    block = state[env.per_ue_dim: 2 * env.per_ue_dim]
    assert block[4] == -1
    # last mcs, bler, offset and ack rate untouched
    assert np.allclose(block[14:], 0.0)
    assert env.ues[1].scheduled == 0


# Logs

def test_slot_log_columns(make_trace, rng, tmp_path):
    env = _env(k_e=0.1)
    env.reset(make_trace([12.0, 3.0], num_slots=5), rng=rng)
    run_episode(env, None, lambda e, s, r: [10, 4], rng)
    path = write_slot_log(env.records, tmp_path / "slot_log.csv")
    frame = pd.read_csv(path)
    assert list(frame.columns) == SLOT_LOG_COLUMNS
    assert len(frame) == 10
    assert set(frame["scheduled"]) == {1}

    with_episode = slot_log_frame(env.records, episode=[3] * len(env.records))
    assert list(with_episode.columns) == ["episode"] + SLOT_LOG_COLUMNS
