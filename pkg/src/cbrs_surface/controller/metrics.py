"""Rate-based quality metrics computed from decoded DCI."""

from __future__ import annotations

from collections import deque
from typing import Iterable, Optional

from ..records import DciRecord


class UndefinedMetric(ValueError):
    """No usable records to form a metric."""


class MetricWindow:
    """Per-UE buffers of (rate, n_prb) over the last ``n_sf`` subframes.

    Only records of ``direction`` enter. A UE unscheduled in a subframe adds
    nothing for that subframe.
    """

    def __init__(self, n_sf: int = 20, direction: str = "DL"):
        if n_sf < 1:
            raise ValueError("n_sf must be >= 1")
        self.n_sf = n_sf
        self.direction = direction
        self._records: deque[tuple[int, str, float, int]] = deque()

    def add(self, record: DciRecord) -> None:
        if record.direction != self.direction:
            return
        self.add_raw(record.clock.absolute_subframe, record.ue_id, record.rate, record.n_prb)

    def add_raw(self, subframe: int, ue: str, rate: float, n_prb: int) -> None:
        self._records.append((subframe, ue, rate, n_prb))
        newest = subframe
        while self._records and self._records[0][0] <= newest - self.n_sf:
            self._records.popleft()

    def extend(self, records: Iterable[DciRecord]) -> None:
        for r in records:
            self.add(r)

    def clear(self) -> None:
        self._records.clear()

    def ues(self) -> list[str]:
        return sorted({r[1] for r in self._records})

    def rates(self, ue: str) -> list[float]:
        return [r[2] for r in self._records if r[1] == ue]

    def prbs(self, ue: str) -> int:
        return sum(r[3] for r in self._records if r[1] == ue)

    def __len__(self) -> int:
        return len(self._records)


def avg_rate(window: MetricWindow, ue: str) -> float:
    """Mean rate over the subframes in which ``ue`` was scheduled."""
    rates = window.rates(ue)
    if not rates:
        raise UndefinedMetric(f"no records for {ue}")
    return sum(rates) / len(rates)


def metric_single(window: MetricWindow, ue: str) -> float:
    return avg_rate(window, ue)


def metric_multi(window: MetricWindow, ues: Optional[Iterable[str]] = None) -> float:
    """PRB-weighted mean of per-UE average rates."""
    ues = window.ues() if ues is None else list(ues)
    weighted = [(avg_rate(window, ue), window.prbs(ue)) for ue in ues if window.prbs(ue) > 0]
    if not weighted:
        raise UndefinedMetric("no PRBs allocated in window")
    if len(weighted) == 1:
        return weighted[0][0]  # skip the multiply-divide so the single-UE case is exact
    return sum(r * n for r, n in weighted) / sum(n for _, n in weighted)
