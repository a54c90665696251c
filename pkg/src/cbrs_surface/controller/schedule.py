"""Per-subframe phase schedules and previous-frame replay of the eNB scheduler."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

from ..core import PhaseVector
from ..records import DciRecord
from ..tdd import FrameConfig, Kind, SubframeClock, default_frame_config


@dataclass(frozen=True)
class PhaseSchedule:
    """Vectors keyed by (entity, direction) for one eNB; entity is a UE id."""

    vectors: Mapping[tuple[str, str], PhaseVector]
    fallback: PhaseVector

    def __post_init__(self):
        k = len(self.fallback)
        if any(len(v) != k for v in self.vectors.values()):
            raise ValueError("all schedule vectors must have the same length")


def apply_schedule(
    schedule: PhaseSchedule,
    clock: SubframeClock,
    predicted_entity: Optional[str],
    cfg: FrameConfig = default_frame_config(),
) -> PhaseVector:
    """Vector for the entity expected in this subframe, else the fallback.

    Uplink subframes look up the entity's UL vector, then its DL vector
    (reciprocity), then the fallback.
    """
    if predicted_entity is None:
        return schedule.fallback
    kind = cfg.kind(clock.subframe_index)
    if kind is Kind.U:
        for key in ((predicted_entity, "UL"), (predicted_entity, "DL")):
            if key in schedule.vectors:
                return schedule.vectors[key]
        return schedule.fallback
    return schedule.vectors.get((predicted_entity, "DL"), schedule.fallback)


@dataclass
class SchedulePredictor:
    """Predicts the UE of a subframe as the one seen at the same index last frame."""

    last: dict[tuple[str, int], str] = field(default_factory=dict)

    def record(self, dci: DciRecord) -> None:
        self.last[(dci.enb_id, dci.clock.subframe_index)] = dci.ue_id

    def forget(self, enb_id: str) -> None:
        self.last = {k: v for k, v in self.last.items() if k[0] != enb_id}

    def predict(self, enb_id: str, subframe_index: int) -> Optional[str]:
        return self.last.get((enb_id, subframe_index % 10))
