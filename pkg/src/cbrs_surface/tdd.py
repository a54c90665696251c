"""LTE TDD frame structures and subframe timing."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

SUBFRAME_MS = 1.0
FRAME_MS = 10.0
SUBFRAMES_PER_FRAME = 10
SYMBOLS_PER_SUBFRAME = 14
SYMBOL_MS = SUBFRAME_MS / SYMBOLS_PER_SUBFRAME
SIB1_PERIOD_MS = 20.0


class Kind(str, Enum):
    D = "D"
    S = "S"
    U = "U"

    @property
    def carries_dci(self) -> bool:
        return self is not Kind.U

    @property
    def is_downlink(self) -> bool:
        return self is not Kind.U


# Standard uplink-downlink configurations 0-6.
STANDARD_PATTERNS: dict[int, str] = {
    0: "DSUUUDSUUU",
    1: "DSUUDDSUUD",
    2: "DSUDDDSUDD",
    3: "DSUUUDDDDD",
    4: "DSUUDDDDDD",
    5: "DSUDDDDDDD",
    6: "DSUUUDSUUD",
}

DEFAULT_CONFIG_ID = 0


@dataclass(frozen=True)
class FrameConfig:
    config_id: int
    pattern: tuple[Kind, ...]

    def __post_init__(self):
        pattern = tuple(Kind(k) for k in self.pattern)
        object.__setattr__(self, "pattern", pattern)
        if len(pattern) != SUBFRAMES_PER_FRAME:
            raise ValueError("a frame has exactly 10 subframes")
        if pattern[0] is not Kind.D or pattern[1] is not Kind.S:
            raise ValueError("subframe 0 must be D and subframe 1 must be S")
        expected = STANDARD_PATTERNS.get(self.config_id)
        if expected is None or "".join(k.value for k in pattern) != expected:
            raise ValueError(f"pattern does not match standard TDD configuration {self.config_id}")

    @classmethod
    def standard(cls, config_id: int) -> "FrameConfig":
        if config_id not in STANDARD_PATTERNS:
            raise ValueError(f"TDD config_id must be 0-6, got {config_id}")
        return cls(config_id, tuple(Kind(c) for c in STANDARD_PATTERNS[config_id]))

    def __str__(self) -> str:
        return "".join(k.value for k in self.pattern)

    def kind(self, subframe_index: int) -> Kind:
        return self.pattern[subframe_index % SUBFRAMES_PER_FRAME]

    def dci_subframes(self) -> list[int]:
        return [i for i, k in enumerate(self.pattern) if k.carries_dci]

    def uplink_subframes(self) -> list[int]:
        return [i for i, k in enumerate(self.pattern) if k is Kind.U]

    def direction_boundaries(self) -> list[int]:
        """Subframe indices where link direction flips (D/S <-> U), frame-circular."""
        out = []
        for i in range(SUBFRAMES_PER_FRAME):
            prev = self.pattern[i - 1]
            if prev.is_downlink != self.pattern[i].is_downlink:
                out.append(i)
        return out

    def period_ms(self) -> float:
        """Shortest period of the D/S-vs-U direction pattern."""
        dirs = [k.is_downlink for k in self.pattern]
        for p in (1, 2, 5):
            if all(dirs[i] == dirs[(i + p) % SUBFRAMES_PER_FRAME] for i in range(SUBFRAMES_PER_FRAME)):
                return p * SUBFRAME_MS
        return FRAME_MS


def default_frame_config() -> FrameConfig:
    """Configuration switching to uplink in subframes 2 and 7 (DSUUUDSUUU)."""
    return FrameConfig.standard(DEFAULT_CONFIG_ID)


@dataclass(frozen=True)
class SubframeClock:
    frame_number: int = 0
    subframe_index: int = 0
    epoch_offset: float = 0.0  # ms

    def __post_init__(self):
        if self.frame_number < 0:
            raise ValueError("frame_number must be >= 0")
        if not 0 <= self.subframe_index < SUBFRAMES_PER_FRAME:
            raise ValueError("subframe_index must be 0-9")

    @classmethod
    def at_ms(cls, t_ms: float, epoch_offset: float = 0.0) -> "SubframeClock":
        n = int(math.floor((t_ms - epoch_offset) / SUBFRAME_MS + 1e-9))
        return cls(n // SUBFRAMES_PER_FRAME, n % SUBFRAMES_PER_FRAME, epoch_offset)

    @property
    def absolute_subframe(self) -> int:
        return self.frame_number * SUBFRAMES_PER_FRAME + self.subframe_index

    @property
    def elapsed_ms(self) -> float:
        return self.absolute_subframe * SUBFRAME_MS

    @property
    def start_ms(self) -> float:
        return self.epoch_offset + self.elapsed_ms

    def advance(self, subframes: int = 1) -> "SubframeClock":
        n = self.absolute_subframe + subframes
        return SubframeClock(n // SUBFRAMES_PER_FRAME, n % SUBFRAMES_PER_FRAME, self.epoch_offset)


def subframe_kind(cfg: FrameConfig, clock: SubframeClock) -> Kind:
    return cfg.pattern[clock.subframe_index]


def sib1_due(clock: SubframeClock) -> bool:
    return clock.subframe_index == 0 and clock.frame_number % 2 == 0
