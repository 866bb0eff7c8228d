import io

from fastapi import APIRouter, File, Query, UploadFile

from experiment_cli import run_fqi
from schemas import FqiConfig, FqiResponse

router = APIRouter(prefix="/fqi", tags=["Offline FQI"])


@router.post("", response_model=FqiResponse)
async def train_fqi(
    dataset: UploadFile = File(...),
    iterations: int = Query(30, ge=1, le=100),
    gamma: float = Query(0.5, ge=0, lt=1),
    seed: int = Query(0)
):
    """
    Fitted Q-iteration on an uploaded logged dataset

    - **dataset**: CSV with cqi, rsrp, bler_inst, mcs, reward, next_cqi,
      next_rsrp, next_bler, direction
    - **iterations**: Bellman iterations
    - **gamma**: discount

    Returns the average-Q curve and the learned vs logged MCS histograms (percent)
    """
    content = await dataset.read()
    config = FqiConfig(iterations=iterations, gamma=gamma, seed=seed)
    return run_fqi(io.BytesIO(content), config)
