from typing import List

from fastapi import APIRouter, Depends

from dependencies import ExperimentLimits, experiment_limits
from experiment_cli import compare, run
from schemas import ComparisonRow, CompareRequest, ExperimentConfig, RunResponse

router = APIRouter(prefix="/experiments", tags=["Experiments"])


@router.post("/run", response_model=RunResponse)
def run_experiment(
    config: ExperimentConfig,
    limits: ExperimentLimits = Depends(experiment_limits)
):
    """
    Run one experiment synchronously

    - **method**: olla, salad or rl
    - **predictor**: SINR estimate used by rl (oracle, dcqi, kf, dt, rf, oco)
    - **setup**: A = (3, 10) or B = (1, 1) CQI/HARQ windows
    - **k_e**, **tau**: BLER penalty gain and target
    - **seeds**, **realizations**, **episode_slots**: evaluation grid

    Artifacts are written under the output root; long runs belong to the CLI.
    """
    limits.check(config)
    summary, artifacts = run(config)
    return RunResponse(summary=summary, artifacts=artifacts)


@router.post("/compare", response_model=List[ComparisonRow])
def compare_experiments(
    request: CompareRequest,
    limits: ExperimentLimits = Depends(experiment_limits)
):
    """
    Paired comparison of several configurations

    - **configs**: at least two configs sharing scenario, seeds and realizations
    - **reference**: label or method the ΔSE% column is computed against
    """
    for config in request.configs:
        limits.check(config)
    return compare(request.configs, request.reference)
