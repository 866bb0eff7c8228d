"""
MCS catalog: the 29-row 5G NR MCS table used by every other module.

The table ships as a plain-text file (``index,mod_order,rate_numerator`` with
the code-rate denominator fixed at 1024), so an alternate table can be
swapped in through ``LA_MCS_TABLE_PATH`` without touching code.
"""
import logging
from functools import lru_cache
from pathlib import Path
from typing import Iterator, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from config import get_settings
from exceptions import DomainError
from schemas import McsEntry

logger = logging.getLogger(__name__)

RATE_DENOMINATOR = 1024
COLUMNS = ["index", "mod_order", "rate_numerator"]


class McsCatalog:
    """Immutable MCS table with vectorised views"""

    def __init__(self, entries: Sequence[McsEntry]):
        self._entries: Tuple[McsEntry, ...] = tuple(entries)
        self._se = np.array([e.se_nom for e in self._entries], dtype=float)
        self._se.setflags(write=False)

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[McsEntry]:
        return iter(self._entries)

    @property
    def max_index(self) -> int:
        return len(self._entries) - 1

    @property
    def se_table(self) -> np.ndarray:
        """Nominal spectral efficiency per index (read-only array)"""
        return self._se

    def check_index(self, index) -> int:
        if isinstance(index, (bool, np.bool_)) or not float(index).is_integer():
            raise DomainError(f"MCS index must be an integer, got {index!r}")
        index = int(index)
        if not 0 <= index <= self.max_index:
            raise DomainError(f"MCS index {index} outside [0, {self.max_index}]")
        return index

    def lookup(self, index: int) -> McsEntry:
        """Return the table row for an MCS index"""
        return self._entries[self.check_index(index)]

    def se_nom(self, index: int) -> float:
        """Nominal spectral efficiency Q(m) * R_c(m) in bits/s/Hz"""
        return self._se[self.check_index(index)]


def load_catalog(path: Union[str, Path]) -> McsCatalog:
    """Load and check an MCS table file"""
    frame = pd.read_csv(path, comment="#", header=None, names=COLUMNS, skipinitialspace=True)
    if frame.isna().any().any():
        raise DomainError(f"{path}: incomplete MCS row")

    entries = []
    for expected, row in enumerate(frame.itertuples(index=False)):
        if int(row.index) != expected:
            raise DomainError(f"{path}: expected index {expected}, got {row.index}")
        code_rate = int(row.rate_numerator) / RATE_DENOMINATOR
        entries.append(
            McsEntry(
                index=int(row.index),
                mod_order=int(row.mod_order),
                code_rate=code_rate,
                se_nom=int(row.mod_order) * code_rate,
            )
        )

    # Within one modulation order the rate strictly increases and the order
    # never decreases. Across an order step the standard's table may dip
    # slightly (38.214 MCS Table 1: index 16 -> 17).
    for prev, curr in zip(entries, entries[1:]):
        if curr.mod_order < prev.mod_order:
            raise DomainError(f"{path}: modulation order decreases at index {curr.index}")
        if curr.mod_order == prev.mod_order and curr.code_rate <= prev.code_rate:
            raise DomainError(f"{path}: code rate not increasing at index {curr.index}")

    logger.debug("Loaded %d MCS entries from %s", len(entries), path)
    return McsCatalog(entries)


@lru_cache()
def get_catalog() -> McsCatalog:
    """Get cached catalog for the configured table file"""
    return load_catalog(get_settings().MCS_TABLE_PATH)


def lookup(index: int) -> McsEntry:
    return get_catalog().lookup(index)


def se_nom(index: int) -> float:
    return get_catalog().se_nom(index)
