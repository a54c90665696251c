"""Discrete-time air-link simulation: eNBs, UEs, the surface, and the sniffer."""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import (
    CBRS_HIGH_HZ,
    CBRS_LOW_HZ,
    CHANNEL_GRID_HZ,
    PHASE_LEVELS,
    PHASE_STEP,
    SPEED_OF_LIGHT,
    CbrsChannel,
    ElementGainChain,
    Position,
    element_gain,
)
from .filters import FilterResponse, out_of_band_rejection
from .records import DciRecord, RsrpSample, SnrSample, rate_from_snr
from .scenario import EnbSpec, Scenario, UeSpec
from .tdd import SYMBOLS_PER_SUBFRAME, FrameConfig, Kind, SubframeClock

BITS_PER_PRB = 288  # payload bits per PRB per subframe per unit of spectral efficiency
SNIFFER_LOSS_TIMEOUT_MS = 20
SNIFFER_RESCAN_MS = 1000


def derive_rng(seed: int, label: str) -> np.random.Generator:
    """Independent stream per subsystem label, stable under adding new labels."""
    return np.random.default_rng([seed, zlib.crc32(label.encode())])


def _fspl_db(d: np.ndarray, f: float) -> np.ndarray:
    return 20.0 * np.log10(4.0 * math.pi * d * f / SPEED_OF_LIGHT)


def _dbm_to_amp(p_dbm):
    return np.sqrt(10.0 ** (np.asarray(p_dbm) / 10.0))


def _mw_to_dbm(p_mw: float) -> float:
    return 10.0 * math.log10(p_mw) if p_mw > 0 else -math.inf


# -- state ----------------------------------------------------------------


@dataclass
class EnbState:
    id: str
    channel: CbrsChannel
    position: Position
    tx_power: float
    frame_config: FrameConfig
    active: bool = True


@dataclass
class UeState:
    id: str
    origin: Position
    serving_enb: str
    demand: float
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    position: Position = None  # type: ignore[assignment]
    blocked_db: float = 0.0

    def __post_init__(self):
        if self.position is None:
            self.position = self.origin

    def move_to(self, t_ms: float) -> None:
        t = t_ms / 1000.0
        vx, vy, vz = self.velocity
        if vx or vy or vz:
            self.position = self.origin.moved(vx * t, vy * t, vz * t)


class SurfaceModel:
    """K elements with ``paths`` filtered paths each; flat path index = k*paths + i."""

    def __init__(
        self,
        positions: Sequence[Position],
        chain: ElementGainChain = ElementGainChain(),
        paths: int = 2,
        filter_template: FilterResponse = FilterResponse(3625e6),
    ):
        if not positions:
            raise ValueError("surface needs at least one element")
        self.positions = np.array([p.as_array() for p in positions])
        self.chain = chain
        self.paths = paths
        self.filter_template = filter_template
        n = len(positions) * paths
        self.phases = np.zeros(n, dtype=int)
        self.enabled = np.zeros(n, dtype=bool)
        self.centers = np.full(n, filter_template.center)
        self.version = 0  # bumped when filters/enables change

    @property
    def element_count(self) -> int:
        return len(self.positions)

    @property
    def path_count(self) -> int:
        return len(self.phases)

    def element_of(self, path: int) -> int:
        return path // self.paths

    def set_phases(self, levels) -> None:
        levels = np.asarray(levels, dtype=int)
        if levels.shape != self.phases.shape:
            raise ValueError(f"expected {self.path_count} phase levels")
        if np.any((levels < 0) | (levels >= PHASE_LEVELS)):
            raise ValueError("phase level outside the 16-level grid")
        self.phases = levels.copy()

    def configure_path(self, path: int, center: Optional[float] = None, enabled: Optional[bool] = None) -> None:
        if center is not None:
            if not CBRS_LOW_HZ <= center <= CBRS_HIGH_HZ:
                raise ValueError(f"filter center {center / 1e6:g} MHz outside the CBRS band")
            self.centers[path] = center
        if enabled is not None:
            self.enabled[path] = enabled
        self.version += 1

    def disable_all(self) -> None:
        self.enabled[:] = False
        self.version += 1

    def rejection_db(self, f: float) -> np.ndarray:
        """Per-path attenuation beyond the in-band level at frequency f."""
        resp = self.filter_template
        dist = np.abs(self.centers - f)
        return np.asarray(out_of_band_rejection(FilterResponse(0.0, resp.insertion_loss, resp.rolloff), dist))


@dataclass(frozen=True)
class LinkTerms:
    """Complex amplitudes (sqrt mW) of the environment path and every surface path,
    before shifter phases; disabled paths are zero."""

    env: complex
    paths: np.ndarray

    def power_mw(self, levels) -> float:
        rot = np.exp(1j * PHASE_STEP * np.asarray(levels))
        return float(abs(self.env + np.dot(self.paths, rot)) ** 2)

    def power_dbm(self, levels) -> float:
        return _mw_to_dbm(self.power_mw(levels))


@dataclass(frozen=True)
class StepResult:
    clock: SubframeClock
    dci: tuple[DciRecord, ...]
    rsrp: tuple[RsrpSample, ...]
    snr: tuple[SnrSample, ...]


# A program is a list of (start_ms within the subframe, levels); the first starts at 0.
Program = Sequence[tuple[float, np.ndarray]]


class World:
    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.enbs: dict[str, EnbState] = {
            e.id: EnbState(e.id, e.channel, e.position, e.tx_power_dbm, e.frame_config, e.active)
            for e in scenario.enbs
        }
        self.ues: dict[str, UeState] = {
            u.id: UeState(u.id, u.position, u.serving_enb, u.demand_mbps, u.velocity) for u in scenario.ues
        }
        sf = scenario.surface
        fl = scenario.filter
        self.surface = SurfaceModel(
            sf.element_positions(), sf.chain, sf.paths_per_element,
            FilterResponse(3625e6, fl.insertion_loss_db, fl.rolloff_db_per_20mhz),
        )
        self.sniffer_position = scenario.sniffer
        self.clock = SubframeClock()
        self.rng = derive_rng(scenario.seed, "airlink")
        self._pending = list(scenario.events)
        self._rr: dict[tuple[str, str], int] = {}
        self._last_dl: dict[str, Optional[str]] = {}
        self._cache: dict = {}
        self.event_log: list = []

    # -- geometry and links -------------------------------------------------

    def link_terms(self, tx: Position, rx: Position, f: float, tx_power: float, env_penalty: float = 0.0) -> LinkTerms:
        s = self.surface
        key = (tx, rx, f, tx_power, env_penalty, s.version)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        d = max(tx.distance_to(rx), 1e-3)
        env_db = tx_power - float(_fspl_db(np.array(d), f)) - self.scenario.env_extra_loss_db - env_penalty
        env = complex(_dbm_to_amp(env_db)) * np.exp(-2j * math.pi * f * d / SPEED_OF_LIGHT)
        txa, rxa = tx.as_array(), rx.as_array()
        d_b = np.maximum(np.linalg.norm(s.positions - txa, axis=1), 1e-3)
        d_u = np.maximum(np.linalg.norm(s.positions - rxa, axis=1), 1e-3)
        elem_db = tx_power + element_gain(s.chain) - _fspl_db(d_b, f) - _fspl_db(d_u, f)
        elem = _dbm_to_amp(elem_db) * np.exp(-2j * math.pi * f * (d_b + d_u) / SPEED_OF_LIGHT)
        path_amp = np.repeat(elem, s.paths) * _dbm_to_amp(s.rejection_db(f)) * s.enabled
        terms = LinkTerms(env, path_amp)
        if len(self._cache) > 4096:
            self._cache.clear()
        self._cache[key] = terms
        return terms

    def ue_link(self, enb_id: str, ue_id: str, direction: str = "DL") -> LinkTerms:
        if enb_id not in self.enbs:
            raise KeyError(f"unknown eNB {enb_id}")
        if ue_id not in self.ues:
            raise KeyError(f"unknown UE {ue_id}")
        e, u = self.enbs[enb_id], self.ues[ue_id]
        # both ends transmit at the eNB power, so the two directions are reciprocal
        a, b = (e.position, u.position) if direction == "DL" else (u.position, e.position)
        return self.link_terms(a, b, e.channel.center_frequency, e.tx_power, u.blocked_db)

    def sniffer_link(self, enb_id: str, transmitter: Optional[str]) -> LinkTerms:
        e = self.enbs[enb_id]
        src = e.position if transmitter is None else self.ues[transmitter].position
        return self.link_terms(src, self.sniffer_position, e.channel.center_frequency, e.tx_power)

    # -- events ---------------------------------------------------------------

    def apply_due_events(self) -> None:
        now = self.clock.start_ms
        while self._pending and self._pending[0].time_ms <= now + 1e-9:
            ev = self._pending.pop(0)
            self.apply_event(ev)

    def apply_event(self, ev) -> None:
        penalty = ev.value if ev.value is not None else self.scenario.blockage_penalty_db
        targets = [ev.target] if ev.target else list(self.ues)
        if ev.kind == "blockage_on":
            for t in targets:
                self.ues[t].blocked_db = penalty
        elif ev.kind == "blockage_off":
            for t in targets:
                self.ues[t].blocked_db = 0.0
        elif ev.kind == "enb_retune":
            self.enbs[ev.target].channel = ev.value
        elif ev.kind == "ue_demand":
            self.ues[ev.target].demand = float(ev.value)
        elif ev.kind == "enb_active":
            self.enbs[ev.target].active = bool(ev.value)
        else:
            raise ValueError(f"unknown event kind {ev.kind}")
        self.event_log.append((self.clock.start_ms, ev))

    # -- scheduling -------------------------------------------------------------

    def served_ues(self, enb_id: str, demand_only: bool = True) -> list[str]:
        return [u.id for u in self.ues.values()
                if u.serving_enb == enb_id and (u.demand > 0 or not demand_only)]

    def _round_robin(self, enb_id: str, direction: str) -> Optional[str]:
        cands = self.served_ues(enb_id)
        if not cands:
            return None
        i = self._rr.get((enb_id, direction), 0)
        self._rr[(enb_id, direction)] = i + 1
        return cands[i % len(cands)]

    def _prb_for(self, enb: EnbState, ue_id: str) -> int:
        budget = enb.channel.prb_budget
        share = self.ues[ue_id].demand / self.scenario.full_load_mbps
        return int(min(budget, max(1, math.ceil(budget * share))))

    def _schedule(self, enb: EnbState, kind: Kind) -> tuple[Optional[str], str, int]:
        if kind is Kind.D:
            ue = self._round_robin(enb.id, "DL")
            self._last_dl[enb.id] = ue
            return ue, "DL", self._prb_for(enb, ue) if ue else 0
        if kind is Kind.S:
            ue = self._last_dl.get(enb.id)
            if ue is not None and self.ues[ue].demand <= 0:
                ue = None
            return ue, "DL", 0  # S carries DCI but no payload
        ue = self._round_robin(enb.id, "UL")
        return ue, "UL", self._prb_for(enb, ue) if ue else 0

    # -- stepping -----------------------------------------------------------------

    def _segments(self, program: Optional[Program]) -> list[tuple[float, float, np.ndarray]]:
        if not program:
            return [(0.0, 1.0, self.surface.phases)]
        out = []
        for i, (start, levels) in enumerate(program):
            end = program[i + 1][0] if i + 1 < len(program) else 1.0
            if end > start:
                out.append((start, end, np.asarray(levels, dtype=int)))
        if not out or out[0][0] > 0:
            raise ValueError("program must start at 0 ms")
        return out

    def step_subframe(self, program: Optional[Program] = None) -> StepResult:
        """Advance one subframe; ``program`` gives the phase levels in force over it."""
        self.apply_due_events()
        clock = self.clock
        t0 = clock.start_ms
        for u in self.ues.values():
            u.move_to(t0)
        segs = self._segments(program)
        if program:
            self.surface.set_phases(segs[-1][2])
        sym_edges = np.arange(SYMBOLS_PER_SUBFRAME + 1) / SYMBOLS_PER_SUBFRAME
        dci, rsrp, snr = [], [], []
        for enb in self.enbs.values():
            if not enb.active:
                continue
            kind = enb.frame_config.kind(clock.subframe_index)
            ue, direction, n_prb = self._schedule(enb, kind)
            if ue is not None:
                link = self.ue_link(enb.id, ue, direction)
                p = sum((b - a) * link.power_mw(lv) for a, b, lv in segs)
                true_snr = _mw_to_dbm(p) - self.scenario.noise_floor_dbm
                jitter = self.rng.normal(0.0, self.scenario.snr_jitter_db) if self.scenario.snr_jitter_db > 0 else 0.0
                dci.append(DciRecord(clock, enb.id, ue, direction, rate_from_snr(true_snr + jitter), n_prb))
                snr.append(SnrSample(t0, enb.id, ue, direction, true_snr))
            if kind is Kind.U:
                tx = ue or next(iter(self.served_ues(enb.id, demand_only=False)), None)
                link = self.sniffer_link(enb.id, tx) if tx else None
            else:
                link = self.sniffer_link(enb.id, None)
            powers = [link.power_mw(lv) if link else 0.0 for _, _, lv in segs]
            noise_mw = 10 ** (self.scenario.noise_floor_dbm / 10)
            for j in range(SYMBOLS_PER_SUBFRAME):
                a, b = sym_edges[j], sym_edges[j + 1]
                acc = 0.0
                for (s0, s1, _), pw in zip(segs, powers):
                    overlap = min(b, s1) - max(a, s0)
                    if overlap > 0:
                        acc += overlap * pw
                level = _mw_to_dbm(acc / (b - a) + noise_mw)
                if self.scenario.rsrp_noise_db > 0:
                    level += self.rng.normal(0.0, self.scenario.rsrp_noise_db)
                rsrp.append(RsrpSample(t0 + j / SYMBOLS_PER_SUBFRAME, enb.id, level))
        self.clock = clock.advance()
        return StepResult(clock, tuple(dci), tuple(rsrp), tuple(snr))


# -- free functions ---------------------------------------------------------


def effective_snr(world: World, enb_id: str, ue_id: str, direction: str = "DL", levels=None) -> float:
    """Noiseless SNR (dB) of an eNB-UE link under the current (or given) phases."""
    if world.ues.get(ue_id) is None:
        raise KeyError(f"unknown UE {ue_id}")
    if world.ues[ue_id].serving_enb != enb_id:
        raise ValueError(f"UE {ue_id} is not served by {enb_id}")
    link = world.ue_link(enb_id, ue_id, direction)
    lv = world.surface.phases if levels is None else levels
    return link.power_dbm(lv) - world.scenario.noise_floor_dbm


def cell_search(world: World, band=(CBRS_LOW_HZ, CBRS_HIGH_HZ), step=CHANNEL_GRID_HZ) -> list[tuple[str, CbrsChannel]]:
    found = []
    n = int(round((band[1] - band[0]) / step))
    for i in range(n + 1):
        f = band[0] + i * step
        for e in world.enbs.values():
            if e.active and abs(e.channel.center_frequency - f) < 1.0:
                found.append((e.id, e.channel))
    return found


def throughput(records: Sequence[DciRecord], window_ms: float) -> dict[tuple[str, str, str], float]:
    """Mbps per (eNB, UE, direction) over a window."""
    if window_ms <= 0:
        return {}
    out: dict[tuple[str, str, str], float] = {}
    for r in records:
        key = (r.enb_id, r.ue_id, r.direction)
        out[key] = out.get(key, 0.0) + r.rate * r.n_prb * BITS_PER_PRB
    return {k: bits / (window_ms * 1e3) for k, bits in out.items()}


class Sniffer:
    """Tracks eNB channels found by cell search and passes on only what it can decode.

    An eNB silent on its tracked channel for ``timeout_ms`` triggers a new
    search, as does every ``rescan_ms`` (to notice newly active eNBs).
    """

    def __init__(self, world: World, timeout_ms: int = SNIFFER_LOSS_TIMEOUT_MS, rescan_ms: int = SNIFFER_RESCAN_MS):
        self.world = world
        self.timeout_ms = timeout_ms
        self.rescan_ms = rescan_ms
        self._searched_at = 0.0
        self.tracked: dict[str, CbrsChannel] = {}
        self.configs: dict[str, FrameConfig] = {}
        self._last_seen: dict[str, float] = {}
        self.searches = 0

    def search(self) -> list[tuple[str, CbrsChannel]]:
        found = cell_search(self.world)
        self.searches += 1
        now = self.world.clock.start_ms
        self._searched_at = now
        self.tracked = dict(found)
        # SIB1 is plain text and carries the frame configuration
        self.configs = {eid: self.world.enbs[eid].frame_config for eid, _ in found}
        self._last_seen = {eid: now for eid, _ in found}
        return found

    def _visible(self, enb_id: str) -> bool:
        ch = self.tracked.get(enb_id)
        e = self.world.enbs[enb_id]
        return ch is not None and e.active and e.channel == ch

    def observe(self, step: StepResult) -> tuple[tuple[DciRecord, ...], tuple[RsrpSample, ...], bool]:
        """Filter one step's records; the flag reports whether a new search ran."""
        vis = {eid for eid in self.tracked if self._visible(eid)}
        now = step.clock.start_ms
        for eid in vis:
            self._last_seen[eid] = now
        lost = [eid for eid, t in self._last_seen.items() if now - t >= self.timeout_ms]
        researched = False
        if lost or now - self._searched_at >= self.rescan_ms:
            self.search()
            researched = True
        return (
            tuple(r for r in step.dci if r.enb_id in vis),
            tuple(s for s in step.rsrp if s.enb_id in vis),
            researched,
        )
