"""Sniffer-visible record types, the rate table, and their CSV forms."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .tdd import SubframeClock

# Spectral efficiency (bits/symbol) of the 15 LTE CQI levels; index 0 = out of range.
RATE_TABLE = (
    0.0, 0.1523, 0.2344, 0.3770, 0.6016, 0.8770, 1.1758, 1.4766,
    1.9141, 2.4063, 2.7305, 3.3223, 3.9023, 4.5234, 5.1152, 5.5547,
)
MAX_RATE_INDEX = len(RATE_TABLE) - 1
_RATE_EDGES = np.array(RATE_TABLE[1:])


def rate_from_snr(snr_db: float) -> int:
    """Highest table level not exceeding log2(1 + SNR); monotone staircase."""
    if math.isnan(snr_db):
        raise ValueError("snr is NaN")
    if snr_db == -math.inf:
        return 0
    capacity = math.log2(1.0 + 10.0 ** (min(snr_db, 300.0) / 10.0))
    return int(np.searchsorted(_RATE_EDGES, capacity, side="right"))


def rate_value(rate_index: int) -> float:
    return RATE_TABLE[rate_index]


@dataclass(frozen=True)
class DciRecord:
    clock: SubframeClock
    enb_id: str
    ue_id: str
    direction: str  # "DL" or "UL"
    rate_index: int
    n_prb: int

    def __post_init__(self):
        if self.direction not in ("DL", "UL"):
            raise ValueError(f"direction must be DL or UL, got {self.direction!r}")
        if not 0 <= self.rate_index <= MAX_RATE_INDEX:
            raise ValueError("rate_index out of range")
        if self.n_prb < 0:
            raise ValueError("n_prb must be >= 0")

    @property
    def time_ms(self) -> float:
        return self.clock.start_ms

    @property
    def rate(self) -> float:
        return RATE_TABLE[self.rate_index]


@dataclass(frozen=True)
class RsrpSample:
    time_ms: float  # symbol start, resolution 1/14 ms
    enb_id: str
    rsrp_dbm: float


@dataclass(frozen=True)
class SnrSample:
    """True per-subframe SNR of the scheduled link (simulator ground truth)."""

    time_ms: float
    enb_id: str
    ue_id: str
    direction: str
    snr_db: float


@dataclass(frozen=True)
class ChannelEvent:
    time_ms: float
    kind: str
    target: Optional[str] = None
    value: object = None


# -- CSV -------------------------------------------------------------------

DCI_COLUMNS = ("timestamp", "enb", "ue", "dir", "rate_index", "n_prb")
RSRP_COLUMNS = ("timestamp", "enb", "rsrp_dbm")
SNR_COLUMNS = ("timestamp", "enb", "ue", "dir", "snr_db")
THROUGHPUT_COLUMNS = ("enb", "ue", "dir", "mbps")


def fmt(x: float, digits: int = 6) -> str:
    """Fixed-precision float text so outputs are byte-stable."""
    s = f"{x:.{digits}f}"
    return "0." + "0" * digits if s == "-0." + "0" * digits else s


def write_csv(path: Path, header: Iterable[str], rows: Iterable[Iterable]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def read_csv(path: Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def dci_rows(records: Iterable[DciRecord]):
    for r in records:
        yield (fmt(r.time_ms, 3), r.enb_id, r.ue_id, r.direction, r.rate_index, r.n_prb)


def rsrp_rows(samples: Iterable[RsrpSample]):
    for s in samples:
        yield (fmt(s.time_ms), s.enb_id, fmt(s.rsrp_dbm, 4))


def snr_rows(samples: Iterable[SnrSample]):
    for s in samples:
        yield (fmt(s.time_ms, 3), s.enb_id, s.ue_id, s.direction, fmt(s.snr_db, 4))
