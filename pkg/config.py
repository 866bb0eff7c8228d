import logging
from functools import lru_cache
from pathlib import Path

from pydantic_settings import BaseSettings

BASE_DIR = Path(__file__).resolve().parent


class Settings(BaseSettings):
    """Application settings"""
    OUTPUT_ROOT: str = "results"
    MCS_TABLE_PATH: str = str(BASE_DIR / "data" / "mcs_table1.csv")
    LOG_LEVEL: str = "INFO"
    NUM_WORKERS: int = 1
    DEFAULT_SEEDS: int = 5
    DEFAULT_REALIZATIONS: int = 10
    EPISODE_SLOTS: int = 1000
    TRAIN_EPISODES: int = 60
    API_MAX_CELLS: int = 20
    API_MAX_SLOTS: int = 5000

    class Config:
        env_file = ".env"
        env_prefix = "LA_"
        case_sensitive = True


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance"""
    return Settings()


def configure_logging(level: str = None) -> None:
    """Install the root log handler once"""
    level = (level or get_settings().LOG_LEVEL).upper()
    root = logging.getLogger()
    if not root.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(
            logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s")
        )
        root.addHandler(handler)
    root.setLevel(level)
