from fastapi import APIRouter, Depends
from typing import List

from dependencies import get_mcs_catalog, valid_mcs_index
from mcs_catalog import McsCatalog
from schemas import McsEntry

router = APIRouter(prefix="/mcs", tags=["MCS Table"])


@router.get("", response_model=List[McsEntry])
def get_mcs_table(catalog: McsCatalog = Depends(get_mcs_catalog)):
    """
    Get the full MCS table

    One row per index with modulation order, code rate and nominal
    spectral efficiency
    """
    return list(catalog)


@router.get("/{index}", response_model=McsEntry)
def get_mcs_entry(
    index: int = Depends(valid_mcs_index),
    catalog: McsCatalog = Depends(get_mcs_catalog)
):
    """
    Get one MCS table row

    - **index**: MCS index (0-28); out-of-range indices return 400
    """
    return catalog.lookup(index)
