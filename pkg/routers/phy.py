from fastapi import APIRouter, Depends

from dependencies import get_mcs_catalog
from mcs_catalog import McsCatalog
from phy_abstraction import bler, threshold_db
from schemas import BlerCurveRequest, BlerCurveResponse

router = APIRouter(prefix="/phy", tags=["PHY Abstraction"])


@router.post("/bler", response_model=BlerCurveResponse)
def get_bler_curve(
    request: BlerCurveRequest,
    catalog: McsCatalog = Depends(get_mcs_catalog)
):
    """
    BLER of one MCS over a list of SINR points

    - **mcs**: MCS index (0-28)
    - **sinr_db**: SINR values in dB
    - **model**: logistic slope per dB and implementation loss (optional)
    """
    mcs = catalog.check_index(request.mcs)
    values = bler(request.model, mcs, request.sinr_db, catalog)
    return BlerCurveResponse(
        mcs=mcs,
        threshold_db=float(threshold_db(request.model, mcs, catalog)),
        sinr_db=request.sinr_db,
        bler=[float(v) for v in values],
    )
