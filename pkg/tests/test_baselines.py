import numpy as np
import pytest

from baselines import (
    BaselinePolicy,
    OllaController,
    SaladController,
    olla_select,
    olla_update,
    salad_step,
)
from la_env import LinkAdaptationEnv, run_episode
from phy_abstraction import Harq, select_highest_mcs
from schemas import EnvConfig, FeedbackConfig, OllaConfig, SaladConfig, SchedulerConfig


def _run_policy(policy, trace, env_config=None, seed=0):
    env = LinkAdaptationEnv(env_config or EnvConfig(feedback=FeedbackConfig(report_delay_slots=1)))
    rng = np.random.default_rng(seed)
    state = env.reset(trace, rng=rng)
    run_episode(env, state, lambda e, s, r: policy.act(e, r), rng, observe=policy.observe)
    return env


# OLLA

def test_olla_steps(bler_model):
    olla = OllaController(OllaConfig(), bler_model)
    assert olla.delta_nack_db == pytest.approx(0.9)
    assert olla.update(Harq.ACK) == pytest.approx(0.1)
    assert olla.update(Harq.NACK) == pytest.approx(-0.8)
    assert olla.update(Harq.UNSCHEDULED) == pytest.approx(-0.8)


def test_olla_offset_clamped(bler_model):
    olla = OllaController(OllaConfig(offset_limit_db=15.0), bler_model)
    for _ in range(40):
        olla.update(Harq.NACK)
    assert olla.offset_db[0] == pytest.approx(-15.0)


def test_olla_select_applies_offset(bler_model):
    olla = OllaController(OllaConfig(), bler_model, num_ues=2)
    for _ in range(3):
        olla_update(olla, Harq.NACK, ue=1)
    assert olla_select(olla, 12.0, ue=0) == select_highest_mcs(bler_model, 12.0, 0.1)
    assert olla_select(olla, 12.0, ue=1) == select_highest_mcs(bler_model, 12.0 - 2.7, 0.1)
    assert olla_select(olla, 12.0, ue=1) < olla_select(olla, 12.0, ue=0)


def test_olla_converges_to_target_bler(bler_model, make_trace):
    policy = BaselinePolicy("olla", 1, bler_model)
    env = _run_policy(policy, make_trace([10.0], num_slots=4000))
    nacks = np.mean([r.ack == 0 for r in env.records])
    assert nacks == pytest.approx(0.1, abs=0.01)


def test_olla_ignores_unscheduled_slots(bler_model, make_trace):
    policy = BaselinePolicy("olla", 3, bler_model)
    cfg = EnvConfig(feedback=FeedbackConfig(report_delay_slots=1), scheduler=SchedulerConfig(mode="pf", k=1))
    env = _run_policy(policy, make_trace([40.0, 40.0, 40.0], num_slots=3), cfg)
    # one slot each, always ACK at 40 dB
    assert np.allclose(policy.olla.offset_db, 0.1)
    assert sum(r.scheduled for r in env.records) == 3


# SALAD

def _salad(bler_model, **overrides):
    cfg = SaladConfig(probe_prob=0.0, **overrides)
    return SaladController(cfg, bler_model, initial_sinr_db=10.0)


def test_salad_ack_and_nack_steps(bler_model, rng):
    salad = _salad(bler_model)
    salad.step(Harq.ACK, 5, rng)
    assert salad.sinr_est_db == pytest.approx(10.0 + 1.2 * 0.1)
    tau = salad.tau
    salad.step(Harq.NACK, 5, rng)
    assert salad.last_step_db == pytest.approx(-1.2 * (1 - tau))


def test_salad_bias_score_enlarges_step(bler_model, rng):
    salad = _salad(bler_model)
    salad.step(Harq.NACK, 5, rng)
    tau = salad.tau
    assert tau == pytest.approx(0.1 - 0.05 * 0.9)
    salad.step(Harq.NACK, 5, rng)
    assert salad.bias_score == pytest.approx(0.9)
    assert salad.last_step_db == pytest.approx(-(1 + 0.9) * 1.2 * (1 - tau))


def test_salad_target_stays_in_bounds(bler_model, rng):
    salad = _salad(bler_model)
    for _ in range(100):
        salad.step(Harq.NACK, 0, rng)
    assert salad.tau == pytest.approx(0.01)
    assert salad.sinr_est_db == pytest.approx(-10.0)
    for _ in range(200):
        salad.step(Harq.ACK, 0, rng)
    assert 0.01 <= salad.tau <= 0.3


def test_salad_skips_learning_without_feedback(bler_model, rng):
    salad = _salad(bler_model)
    mcs = salad.step(None, None, rng)
    assert salad.sinr_est_db == 10.0
    assert len(salad.outcomes) == 0
    assert mcs == select_highest_mcs(bler_model, 10.0, 0.1)


def test_salad_probe_is_more_aggressive(bler_model, rng):
    careful = _salad(bler_model)
    probing = SaladController(SaladConfig(probe_prob=1.0), bler_model, initial_sinr_db=10.0)
    mcs, _ = salad_step(careful, None, None, rng)
    probe_mcs, _ = salad_step(probing, None, None, rng)
    assert probing.last_probe
    assert probe_mcs > mcs


def test_salad_probe_rate(bler_model):
    salad = SaladController(SaladConfig(), bler_model, initial_sinr_db=10.0)
    rng = np.random.default_rng(9)
    for _ in range(4000):
        salad.step(None, None, rng)
    assert salad.probes / salad.selections == pytest.approx(0.15, abs=0.02)


def test_salad_policy_starts_from_first_report(bler_model, make_trace, rng):
    env = LinkAdaptationEnv(EnvConfig(feedback=FeedbackConfig(report_delay_slots=1, quant_step_db=1.0)))
    env.reset(make_trace([7.2, 19.6]), rng=rng)
    policy = BaselinePolicy("salad", 2, bler_model)
    policy.act(env, rng)
    assert policy.salad[0].sinr_est_db == 7.0
    assert policy.salad[1].sinr_est_db == 20.0


def test_salad_keeps_bler_moderate(bler_model, make_trace):
    policy = BaselinePolicy("salad", 1, bler_model)
    env = _run_policy(policy, make_trace([12.0], num_slots=3000))
    nacks = np.mean([r.ack == 0 for r in env.records])
    se = np.mean([r.se_achieved for r in env.records])
    assert nacks < 0.3
    assert se > 0.5


def test_olla_nine_acks_one_nack_is_neutral(bler_model):
    olla = OllaController(OllaConfig(target_bler=0.1), bler_model)
    for _ in range(9):
        olla.update(Harq.ACK)
    assert olla.update(Harq.NACK) == pytest.approx(0.0, abs=1e-12)
