import numpy as np
import pytest

from channel_model import SinrTrace
from phy_abstraction import (
    Harq,
    best_expected_mcs,
    bler,
    bler_all,
    expected_se,
    quantize_db,
    report_effective_sinr,
    sample_harq,
    select_highest_mcs,
    threshold_db,
)
from schemas import BlerModel, FeedbackConfig


@pytest.mark.parametrize("mcs, expected", [(0, -5.535), (10, 3.792), (28, 18.628)])
def test_threshold_values(bler_model, mcs, expected):
    assert threshold_db(bler_model, mcs) == pytest.approx(expected, abs=1e-3)


def test_threshold_vectorised(bler_model):
    values = threshold_db(bler_model, np.array([0, 10, 28]))
    assert values.shape == (3,)
    assert values[1] == pytest.approx(threshold_db(bler_model, 10))


def test_bler_is_half_at_threshold(bler_model):
    for mcs in (0, 5, 17, 28):
        assert bler(bler_model, mcs, threshold_db(bler_model, mcs)) == pytest.approx(0.5)


def test_bler_decreases_with_sinr(bler_model):
    sinr = np.linspace(-10, 40, 101)
    for mcs in range(29):
        values = bler(bler_model, mcs, sinr)
        assert np.all(np.diff(values) <= 0)
        assert values[0] > values[-1]


def test_bler_bounded(bler_model):
    values = bler_all(bler_model, 12.0)
    assert values.shape == (29,)
    assert np.all((values >= 0) & (values <= 1))


def test_bler_extremes(bler_model):
    assert bler(bler_model, 0, 40.0) < 1e-9
    assert bler(bler_model, 28, -10.0) > 1 - 1e-9


def test_implementation_loss_shifts_curve():
    base = BlerModel(impl_loss_db=0.0)
    lossy = BlerModel(impl_loss_db=3.0)
    assert threshold_db(lossy, 7) - threshold_db(base, 7) == pytest.approx(3.0)


def test_expected_se_maximizer_at_8db(bler_model):
    assert best_expected_mcs(bler_model, 8.0) == 13
    values = expected_se(bler_model, np.arange(29), 8.0)
    assert values[13] == pytest.approx(values.max())


def test_select_highest_mcs_meets_target(bler_model):
    mcs = select_highest_mcs(bler_model, 15.0, 0.1)
    assert bler(bler_model, mcs, 15.0) <= 0.1
    if mcs < 28:
        assert bler(bler_model, mcs + 1, 15.0) > 0.1


def test_select_highest_mcs_falls_back_to_zero(bler_model):
    assert select_highest_mcs(bler_model, -20.0, 0.1) == 0


def test_sample_harq_deterministic_extremes(bler_model, rng):
    assert all(sample_harq(bler_model, 0, 40.0, rng) == Harq.ACK for _ in range(200))
    assert all(sample_harq(bler_model, 28, -10.0, rng) == Harq.NACK for _ in range(200))


def test_sample_harq_rate_matches_bler(bler_model):
    rng = np.random.default_rng(7)
    mcs = 10
    sinr = float(threshold_db(bler_model, mcs))
    nacks = sum(sample_harq(bler_model, mcs, sinr, rng) == Harq.NACK for _ in range(4000))
    assert nacks / 4000 == pytest.approx(0.5, abs=0.03)


@pytest.mark.parametrize("value, step, expected", [
    (2.4, 1.0, 2.0),
    (2.5, 1.0, 3.0),
    (-2.5, 1.0, -2.0),
    (7.3, 0.5, 7.5),
    (7.3, 0.0, 7.3),
])
def test_quantize(value, step, expected):
    assert quantize_db(value, step) == pytest.approx(expected)


def test_report_is_delayed_and_quantized():
    trace = SinrTrace(sinr_db=np.array([[0.2, 1.4, 2.6, 3.8, 5.0]]))
    cfg = FeedbackConfig(report_delay_slots=2, quant_step_db=1.0)
    reports = [report_effective_sinr(trace, cfg, t, 0) for t in range(5)]
    # slots 0 and 1 see the first sample
    assert reports == [0.0, 0.0, 0.0, 1.0, 3.0]
