import numpy as np
import pytest

from channel_model import SinrTrace
from mcs_catalog import get_catalog
from schemas import BlerModel, EnvConfig, FeedbackConfig


@pytest.fixture
def catalog():
    return get_catalog()


@pytest.fixture
def bler_model():
    return BlerModel()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def constant_trace(values_db, num_slots=50):
    """Trace with one constant SINR per UE"""
    values = np.asarray(values_db, dtype=float)[:, None]
    return SinrTrace(sinr_db=np.repeat(values, num_slots, axis=1))


@pytest.fixture
def make_trace():
    return constant_trace


@pytest.fixture
def env_config():
    return EnvConfig(feedback=FeedbackConfig(report_delay_slots=1, quant_step_db=1.0))


@pytest.fixture
def output_root(tmp_path, monkeypatch):
    """Point LA_OUTPUT_ROOT at a temporary directory"""
    from config import get_settings

    root = tmp_path / "results"
    monkeypatch.setenv("LA_OUTPUT_ROOT", str(root))
    get_settings.cache_clear()
    yield root
    get_settings.cache_clear()
