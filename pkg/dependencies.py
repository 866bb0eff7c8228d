from fastapi import Depends, HTTPException, status

from config import Settings, get_settings
from exceptions import DomainError
from mcs_catalog import McsCatalog, get_catalog


def get_mcs_catalog() -> McsCatalog:
    """Get the cached MCS catalog"""
    return get_catalog()


def get_app_settings() -> Settings:
    """Get cached settings instance"""
    return get_settings()


def valid_mcs_index(index: int, catalog: McsCatalog = Depends(get_mcs_catalog)) -> int:
    """Require an index inside the MCS table (400 otherwise)"""
    try:
        return catalog.check_index(index)
    except DomainError as exc:
        raise HTTPException(
            status_code=status.HTTP_400_BAD_REQUEST,
            detail=str(exc)
        )


class ExperimentLimits:
    """Reject experiments too large to run inside a request"""

    def __init__(self, max_cells: int = 20, max_slots: int = 5000):
        self.max_cells = max_cells
        self.max_slots = max_slots

    def check(self, config) -> None:
        cells = len(config.seeds) * config.realizations
        if cells > self.max_cells:
            raise HTTPException(
                status_code=status.HTTP_400_BAD_REQUEST,
                detail=f"too many (seed x realization) cells: {cells} > {self.max_cells}"
            )
        if config.episode_slots > self.max_slots:
            raise HTTPException(
                status_code=status.HTTP_400_BAD_REQUEST,
                detail=f"episode_slots above {self.max_slots}; use the CLI for long runs"
            )


def experiment_limits(settings: Settings = Depends(get_app_settings)) -> ExperimentLimits:
    """Request-size limits from LA_API_MAX_CELLS / LA_API_MAX_SLOTS"""
    return ExperimentLimits(settings.API_MAX_CELLS, settings.API_MAX_SLOTS)
