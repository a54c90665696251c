"""Clock-offset estimation from RSRP glitches caused by surface toggles."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..records import RsrpSample
from ..tdd import FRAME_MS, SYMBOL_MS, SYMBOLS_PER_SUBFRAME, FrameConfig

MATCH_TOLERANCE_MS = 0.2


@dataclass(frozen=True)
class SyncState:
    believed_offset: float = 0.0  # correction currently applied, ms
    estimate: float = 0.0  # last round's estimate, ms
    locked: bool = False

    def __post_init__(self):
        if not -FRAME_MS < self.believed_offset < FRAME_MS:
            raise ValueError("believed_offset must lie within one frame")

    def corrected(self, estimate: float) -> "SyncState":
        return SyncState(wrap_offset(self.believed_offset + estimate), estimate, self.locked)


def wrap_offset(t: float, period: float = FRAME_MS) -> float:
    """Map to [-period/2, period/2)."""
    return (t + period / 2) % period - period / 2


def probe_toggle_times(cfg: FrameConfig) -> list[float]:
    """Believed in-frame switch times of the probe: into config A at subframe 0,
    into config B at the first uplink boundary. Two toggles per frame break the
    half-frame symmetry of 5 ms-periodic patterns."""
    first_ul = next(b for b in cfg.direction_boundaries() if b != 0)
    return [0.0, float(first_ul)]


def probe_uses_a(cfg: FrameConfig, believed_subframe: int) -> bool:
    """Config A runs from believed subframe 0 up to the first uplink boundary."""
    first_ul = int(probe_toggle_times(cfg)[1])
    return believed_subframe % 10 < first_ul


def _boundary_indices(times: np.ndarray, cfg: FrameConfig, tx_changes=None) -> np.ndarray:
    """Mask of samples that start a subframe where the transmitter changes.

    ``tx_changes`` lists absolute subframes known to switch transmitter (e.g.
    from decoded uplink grants); by default the direction boundaries."""
    sym = np.rint(times / SYMBOL_MS).astype(int)
    on_sub = (sym % SYMBOLS_PER_SUBFRAME) == 0
    sub = sym // SYMBOLS_PER_SUBFRAME
    if tx_changes is not None:
        return on_sub & np.isin(sub, list(tx_changes))
    return on_sub & np.isin(sub % 10, cfg.direction_boundaries())


def transmitter_changes(transmitters: dict[int, str]) -> set[int]:
    """Absolute subframes whose transmitter differs from the previous subframe's."""
    return {n for n, tx in transmitters.items() if n - 1 in transmitters and transmitters[n - 1] != tx}


def detect_glitches(
    rsrp: Sequence[RsrpSample], cfg: FrameConfig, threshold_db: float = 1.0, tx_changes=None
) -> list[float]:
    """Times (ms) of RSRP steps not explained by a transmitter switch."""
    if len(rsrp) < 3:
        return []
    times = np.array([s.time_ms for s in rsrp])
    level = np.array([s.rsrp_dbm for s in rsrp])
    lin = 10.0 ** (level / 10.0)
    is_bound = _boundary_indices(times, cfg, tx_changes)
    jumps = np.abs(np.diff(level)) > threshold_db
    changed = [j for j in range(1, len(level)) if jumps[j - 1] and not is_bound[j]]
    out = []
    i = 0
    while i < len(changed):
        c = changed[i]
        while i + 1 < len(changed) and changed[i + 1] == changed[i] + 1:
            i += 1
        i += 1
        out.append(_toggle_time(times, lin, is_bound, c))
    return out


def _toggle_time(times, lin, is_bound, c: int) -> float:
    """Sub-symbol toggle time from the energy split across the samples around c."""
    n = len(lin)
    use_prev = c - 2 >= 0 and not is_bound[c - 1]
    p_old = lin[c - 2] if use_prev else lin[c - 1]
    p_new = lin[c + 1] if c + 1 < n and not is_bound[c + 1] else lin[c]
    if p_new == p_old:
        return float(times[c])
    mixed = [c - 1, c] if use_prev else [c]
    frac = sum(min(max((lin[j] - p_old) / (p_new - p_old), 0.0), 1.0) for j in mixed)
    return float(times[c] + SYMBOL_MS - frac * SYMBOL_MS)


def _circ(x: np.ndarray | float) -> np.ndarray | float:
    return (np.asarray(x) + FRAME_MS / 2) % FRAME_MS - FRAME_MS / 2


def estimate_time_offset(
    rsrp: Sequence[RsrpSample],
    cfg: FrameConfig,
    toggle_log: Optional[Sequence[float]] = None,
    threshold_db: float = 1.0,
    reference_db: Optional[float] = None,
    tx_changes=None,
) -> float:
    """Lateness (ms) of the surface's switching relative to true subframe timing.

    ``toggle_log`` holds the intended in-frame switch times; by default the
    configuration's direction boundaries. With no glitch the answer is 0,
    unless ``reference_db`` (downlink level under probe config A minus config B)
    reveals the probe running half a frame late.
    """
    glitches = detect_glitches(rsrp, cfg, threshold_db, tx_changes)
    toggles = np.array(sorted(set(float(t) % FRAME_MS for t in (toggle_log if toggle_log is not None
                                                                  else cfg.direction_boundaries()))))
    if not glitches:
        if toggle_log is None or reference_db is None:
            return 0.0
        return _half_frame_offset(rsrp, cfg, threshold_db, reference_db)
    g = np.array(glitches) % FRAME_MS
    candidates = np.unique(np.round(_circ(g[:, None] - toggles[None, :]).ravel(), 9))

    def residuals(tau):
        r = _circ(g[:, None] - toggles[None, :] - tau)
        return r[np.arange(len(g)), np.argmin(np.abs(r), axis=1)]

    def score(tau):
        return int(np.sum(np.abs(residuals(tau)) <= MATCH_TOLERANCE_MS))

    best = max(candidates, key=lambda t: (score(t), -abs(t)))
    r = residuals(best)
    matched = r[np.abs(r) <= MATCH_TOLERANCE_MS]
    return float(wrap_offset(best + float(np.median(matched))))


def _half_frame_offset(rsrp, cfg: FrameConfig, threshold_db: float, reference_db: float) -> float:
    """Every toggle hidden under a true boundary: for a 5 ms-periodic pattern,
    config A sits either in the first or the second half-frame."""
    if cfg.period_ms() != FRAME_MS / 2:
        return 0.0
    times = np.array([s.time_ms for s in rsrp])
    level = np.array([s.rsrp_dbm for s in rsrp])
    sub = np.floor(times + 1e-9).astype(int) % 10
    first_ul = int(probe_toggle_times(cfg)[1])
    a = level[sub < first_ul]
    b = level[(sub >= 5) & (sub < 5 + first_ul)]
    if not (len(a) and len(b)) or abs(reference_db) <= threshold_db:
        return 0.0
    asym = a.mean() - b.mean()
    if abs(asym) > threshold_db and np.sign(asym) != np.sign(reference_db):
        return -FRAME_MS / 2
    return 0.0


def glitch_count(rsrp: Sequence[RsrpSample], cfg: FrameConfig, threshold_db: float = 1.0, tx_changes=None) -> int:
    return len(detect_glitches(rsrp, cfg, threshold_db, tx_changes))


def believed_program_segments(
    subframe: int, lateness_ms: float
) -> list[tuple[float, int]]:
    """Split true subframe ``subframe`` into pieces by which believed subframe is
    in force when the controller switches ``lateness_ms`` late.

    Returns (start within subframe, believed subframe index) pairs.
    """
    frac = lateness_ms - math.floor(lateness_ms)
    base = subframe - math.floor(lateness_ms)
    if frac < 1e-12:
        return [(0.0, base)]
    return [(0.0, base - 1), (frac, base)]
