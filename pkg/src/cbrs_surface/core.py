"""Domain types, geometry and link-budget arithmetic for an active smart surface."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0  # m/s

CBRS_LOW_HZ = 3550e6
CBRS_HIGH_HZ = 3700e6
CHANNEL_GRID_HZ = 10e6

PHASE_LEVELS = 16
PHASE_STEP = 2.0 * math.pi / PHASE_LEVELS


class DomainError(ValueError):
    """Argument outside the domain of a link-budget formula."""


def wavelength(frequency_hz: float) -> float:
    return SPEED_OF_LIGHT / frequency_hz


@dataclass(frozen=True)
class Position:
    x: float
    y: float
    z: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.z)):
            raise ValueError(f"non-finite coordinate in {self!r}")

    def distance_to(self, other: "Position") -> float:
        return math.dist((self.x, self.y, self.z), (other.x, other.y, other.z))

    def moved(self, dx: float, dy: float, dz: float = 0.0) -> "Position":
        return Position(self.x + dx, self.y + dy, self.z + dz)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    @classmethod
    def of(cls, xyz: Sequence[float]) -> "Position":
        if len(xyz) == 2:
            return cls(float(xyz[0]), float(xyz[1]))
        if len(xyz) != 3:
            raise ValueError(f"position needs 2 or 3 coordinates, got {len(xyz)}")
        return cls(float(xyz[0]), float(xyz[1]), float(xyz[2]))


@dataclass(frozen=True)
class CbrsChannel:
    """A CBRS channel: center on the 10 MHz grid inside 3550-3700 MHz."""

    center_frequency: float  # Hz
    bandwidth: float = 20e6  # Hz

    def __post_init__(self):
        f = self.center_frequency
        if not CBRS_LOW_HZ <= f <= CBRS_HIGH_HZ:
            raise ValueError(f"center {f / 1e6:g} MHz outside the CBRS band")
        steps = f / CHANNEL_GRID_HZ
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError(f"center {f / 1e6:g} MHz is not a multiple of 10 MHz")
        if self.bandwidth not in (10e6, 20e6):
            raise ValueError(f"bandwidth must be 10 or 20 MHz, got {self.bandwidth / 1e6:g}")

    @classmethod
    def mhz(cls, center_mhz: float, bandwidth_mhz: float = 20) -> "CbrsChannel":
        return cls(center_mhz * 1e6, bandwidth_mhz * 1e6)

    @property
    def center_mhz(self) -> float:
        return self.center_frequency / 1e6

    @property
    def prb_budget(self) -> int:
        # 50 PRB per 10 MHz
        return int(round(50 * self.bandwidth / 10e6))

    def overlaps(self, other: "CbrsChannel") -> bool:
        half = (self.bandwidth + other.bandwidth) / 2
        return abs(self.center_frequency - other.center_frequency) < half


def quantize_phase(phases) -> np.ndarray:
    """Snap angles (radians) to the nearest of the 16 shifter levels, as level indices."""
    levels = np.rint(np.asarray(phases, dtype=float) / PHASE_STEP).astype(int)
    return np.mod(levels, PHASE_LEVELS)


@dataclass(frozen=True)
class PhaseVector:
    """K phase-shifter settings, each on the pi/8 grid.

    Stored as integer levels 0..15; ``phases`` gives radians.
    """

    levels: tuple[int, ...]

    def __post_init__(self):
        levels = tuple(int(v) for v in self.levels)
        if any(not 0 <= v < PHASE_LEVELS for v in levels):
            raise ValueError(f"phase levels must lie in [0, {PHASE_LEVELS})")
        object.__setattr__(self, "levels", levels)

    @classmethod
    def zeros(cls, k: int) -> "PhaseVector":
        return cls((0,) * k)

    @classmethod
    def from_phases(cls, phases: Iterable[float]) -> "PhaseVector":
        """Build from radians; every angle must already sit on the grid."""
        arr = np.asarray(list(phases), dtype=float)
        levels = quantize_phase(arr)
        off = np.angle(np.exp(1j * (arr - levels * PHASE_STEP)))
        if np.any(np.abs(off) > 1e-9):
            raise ValueError("phase not on the pi/8 grid; use PhaseVector.quantized")
        return cls(tuple(levels))

    @classmethod
    def quantized(cls, phases: Iterable[float]) -> "PhaseVector":
        return cls(tuple(quantize_phase(list(phases))))

    @property
    def phases(self) -> tuple[float, ...]:
        return tuple(v * PHASE_STEP for v in self.levels)

    def as_array(self) -> np.ndarray:
        return np.array(self.levels, dtype=int)

    def shifted(self, steps) -> "PhaseVector":
        return PhaseVector(tuple(np.mod(self.as_array() + np.asarray(steps, dtype=int), PHASE_LEVELS)))

    def __len__(self) -> int:
        return len(self.levels)


@dataclass(frozen=True)
class ElementGainChain:
    """Per-element gains and losses in dB.

    Losses are stored as non-negative magnitudes and subtracted. The published
    constants list them with a minus sign (L_split = -0.64 dB, L_comb = -0.64 dB,
    L_phase = -2.5 dB, L_filter = -5 dB, L_line = -1 dB).
    """

    g_rx: float = 2.46
    g_tx: float = 2.46
    g_amp: float = 16.65
    l_split: float = 0.64
    l_comb: float = 0.64
    l_phase: float = 2.5
    l_filter: float = 5.0
    l_line: float = 1.0
    l_splitop: float = 3.0

    def __post_init__(self):
        for name in ("l_split", "l_comb", "l_phase", "l_filter", "l_line", "l_splitop"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} is a loss magnitude and must be >= 0")


@dataclass(frozen=True)
class LinkBudgetResult:
    l_be: float
    l_eu: float
    g_ele: float
    l_ele: float
    g_s: float


def free_space_path_loss(d: float, f: float) -> float:
    """Free-space path loss 20*log10(4*pi*d/lambda) in dB."""
    if not d > 0 or not f > 0:
        raise DomainError(f"path loss needs d > 0 and f > 0 (got d={d}, f={f})")
    return 20.0 * math.log10(4.0 * math.pi * d / wavelength(f))


def element_gain(chain: ElementGainChain) -> float:
    return (
        chain.g_rx
        + chain.g_tx
        + chain.g_amp
        - chain.l_split
        - chain.l_comb
        - chain.l_phase
        - chain.l_filter
        - chain.l_line
        - chain.l_splitop
    )


def element_path_loss(d_b: float, d_u: float, f: float, chain: ElementGainChain) -> float:
    """Net gain through one element in dB; negative means net loss."""
    return element_gain(chain) - free_space_path_loss(d_b, f) - free_space_path_loss(d_u, f)


def surface_gain(k: int, p_b: float, l_ele: float, l_env: float, coherent: bool = False) -> float:
    """Received-power gain of a K-element surface over the environment path.

    ``l_ele`` and ``l_env`` are loss magnitudes (positive = loss), so the
    element loss is ``-element_path_loss(...)``. The default sums the K element
    powers; ``coherent=True`` sums amplitudes instead (20*log10(K)).
    """
    if k < 1:
        raise DomainError("surface needs at least one element")
    # db(k * db^-1(p_b - l_ele) / db^-1(p_b - l_env)); p_b cancels, and the
    # closed form avoids under/overflow of the linear powers
    scale = 20.0 if coherent else 10.0
    return scale * math.log10(k) + (l_env - l_ele)


def link_budget(
    d_b: float,
    d_u: float,
    f: float,
    k: int,
    l_env: float,
    chain: ElementGainChain = ElementGainChain(),
    p_b: float = 0.0,
    coherent: bool = False,
) -> LinkBudgetResult:
    l_be = free_space_path_loss(d_b, f)
    l_eu = free_space_path_loss(d_u, f)
    g_ele = element_gain(chain)
    l_ele = g_ele - l_be - l_eu
    g_s = surface_gain(k, p_b, -l_ele, l_env, coherent=coherent)
    return LinkBudgetResult(l_be=l_be, l_eu=l_eu, g_ele=g_ele, l_ele=l_ele, g_s=g_s)
