"""The surface controller loop: sync, per-subframe beamforming, element selection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..core import PHASE_LEVELS, PhaseVector
from ..records import DciRecord, RsrpSample
from ..scenario import ControllerParams
from ..sim import Program, Sniffer, StepResult, World, derive_rng
from ..tdd import FRAME_MS, SYMBOL_MS, Kind
from .beamform import BeamformConfig, Beamformer
from .metrics import MetricWindow, UndefinedMetric, metric_multi, metric_single
from .schedule import SchedulePredictor
from .selection import Assignment, ElementSelector
from .sync import (
    SyncState,
    believed_program_segments,
    estimate_time_offset,
    glitch_count,
    probe_toggle_times,
    probe_uses_a,
    transmitter_changes,
    wrap_offset,
)

CALIBRATION_MS = 60  # hold A for 3 frames, then B for 3 frames
PROBE_ROUND_MS = 40  # analyse the middle two frames of each round


def probe_vectors(n_paths: int) -> tuple[np.ndarray, np.ndarray]:
    """Config A is all-zero; config B flips every other path by pi."""
    a = np.zeros(n_paths, dtype=int)
    b = a.copy()
    b[::2] = PHASE_LEVELS // 2
    return a, b


@dataclass
class _Unit:
    """One beamforming search and the records gathered for its current vector."""

    key: tuple[str, str, str]  # (enb, ue or "*", direction)
    bf: Beamformer
    window: MetricWindow
    count: int = 0


@dataclass
class SyncRound:
    round: int
    estimate_ms: float
    residual_ms: float
    glitches: int
    time_ms: float
    locked: bool


class SurfaceController:
    """Consumes sniffer output one subframe at a time and programs the surface.

    Call :meth:`program` before each simulator step and :meth:`ingest` after.
    ``clock_offset_ms`` is how late the controller's switching lands against
    true eNB timing before synchronization.
    """

    def __init__(self, world: World, params: ControllerParams, seed: int,
                 run_sync: bool = True):
        self.world = world
        self.params = params
        self.sniffer = Sniffer(world)
        self.bf_config = BeamformConfig(params.n_nf, params.epsilon, params.perturb_prob, params.plateau)
        self.rng_bf = derive_rng(seed, "beamform")
        self.n_paths = world.surface.path_count
        self.lateness = float(params.clock_offset_ms)
        self.sync = SyncState()
        self.phase = "sync" if run_sync else "track"
        self.sync_rounds: list[SyncRound] = []
        self.sync_locked_at: Optional[float] = None if run_sync else 0.0
        self.commands: list[tuple[float, int, int, float, float]] = []
        self.bf_log: list[tuple] = []
        self.units: dict[tuple[str, str, str], _Unit] = {}
        self.predictor = SchedulePredictor()
        self._decided: dict[int, tuple[np.ndarray, dict]] = {}
        self._owners: dict[int, dict] = {}  # true subframe -> units whose vectors ran
        self._tx: dict[int, str] = {}  # true subframe -> transmitter seen by the sniffer
        self._applied = world.surface.phases.copy()
        self._rsrp: list[RsrpSample] = []
        self._sync_enb: Optional[str] = None
        self._phase_start = 0
        self._round = 0
        self._reference: Optional[float] = None
        self._enb_paths: dict[str, list[int]] = {}
        self._channels: dict = {}
        self._subframe = 0
        self.selector: Optional[ElementSelector] = None
        self._selection_saved: dict = {}
        self.selection_done = False
        self._probe_a, self._probe_b = probe_vectors(self.n_paths)
        self._acquire()

    # -- setup ------------------------------------------------------------------

    def _acquire(self) -> None:
        found = self.sniffer.search()
        ids = sorted(eid for eid, _ in found)
        self._channels = dict(found)
        if self.selector is None:
            self.selector = ElementSelector(self.n_paths, ids, derive_rng(self.world.scenario.seed, "selection"),
                                            self.params.swap_frac)
        else:
            self.selector.reinitialize(ids)
        self.selection_done = not self.selector.active
        self._sync_enb = ids[0] if ids else None
        self._apply_assignment(self.selector.current)

    def _apply_assignment(self, assign: Assignment) -> None:
        t = self.world.clock.start_ms
        s = self.world.surface
        for p, owner in enumerate(assign.owners):
            if owner is None:
                if s.enabled[p]:
                    s.configure_path(p, enabled=False)
                continue
            center = self._channels[owner].center_frequency
            if not s.enabled[p] or s.centers[p] != center:
                s.configure_path(p, center=center, enabled=True)
                self._log_command(t, p)
        self._enb_paths = {e: assign.paths_of(e) for e in assign.enbs()}
        for u in self.units.values():
            u.bf.reset()
            u.window.clear()
            u.count = 0

    def _log_command(self, t: float, p: int) -> None:
        s = self.world.surface
        center = float(s.centers[p]) if s.enabled[p] else math.nan
        self.commands.append((t, s.element_of(p), p % s.paths, float(self._applied[p]), center))

    # -- decisions ----------------------------------------------------------------

    @property
    def residual(self) -> float:
        """Remaining lateness of switching against true timing (simulation truth)."""
        return wrap_offset(self.lateness - self.sync.believed_offset)

    def program(self, n: int) -> Program:
        """Phase levels over true subframe n."""
        self._subframe = n
        segs = believed_program_segments(n, self.residual)
        prog = []
        owners, longest = {}, -1.0
        for i, (start, m) in enumerate(segs):
            levels, own = self._decide(m)
            prog.append((start, levels))
            length = (segs[i + 1][0] if i + 1 < len(segs) else 1.0) - start
            if length > longest:
                owners, longest = own, length
        self._owners[n] = owners
        self._owners.pop(n - 2, None)
        for start, levels in prog:
            changed = np.nonzero(levels != self._applied)[0]
            self._applied = levels.copy()
            for p in changed:
                self._log_command(n + start, int(p))
        return prog

    def _decide(self, m: int) -> tuple[np.ndarray, dict]:
        hit = self._decided.get(m)
        if hit is not None:
            return hit
        if self.phase == "sync":
            out = (self._sync_vector(m), {})
        else:
            out = self._track_vector(m)
        self._decided[m] = out
        for old in [k for k in self._decided if k < m - 20]:
            del self._decided[old]
        return out

    def _sync_vector(self, m: int) -> np.ndarray:
        rel = m - self._phase_start
        if self._reference is None and rel < CALIBRATION_MS:
            return self._probe_a if rel < CALIBRATION_MS // 2 else self._probe_b
        cfg = self.world.enbs[self._sync_enb].frame_config if self._sync_enb else None
        if cfg is None:
            return self._probe_a
        return self._probe_a if probe_uses_a(cfg, m) else self._probe_b

    def _unit(self, enb: str, ue: str, direction: str) -> _Unit:
        if not self.params.per_ue_schedule:
            ue = "*"
        key = (enb, ue, direction)
        u = self.units.get(key)
        if u is None:
            k = len(self._enb_paths.get(enb, []))
            init = self._seed_vector(enb, direction)
            u = _Unit(key, Beamformer(k, self.bf_config, self.rng_bf, init), MetricWindow(self.params.n_sf, direction))
            self.units[key] = u
        return u

    def _seed_vector(self, enb: str, direction: str) -> Optional[PhaseVector]:
        """New units start from the eNB's best vector found so far."""
        for (e, _, d), u in self.units.items():
            if e == enb and d == "DL":
                return u.bf.best_theta
        return None

    def _fallback(self, enb: str) -> Optional[PhaseVector]:
        return self._seed_vector(enb, "DL")

    def _track_vector(self, m: int) -> tuple[np.ndarray, dict]:
        levels = self._applied.copy()
        owners: dict[str, tuple] = {}
        for enb_id, paths in self._enb_paths.items():
            if not paths or enb_id not in self.world.enbs:
                continue
            cfg = self.sniffer.configs.get(enb_id) or self.world.enbs[enb_id].frame_config
            kind = cfg.kind(m % 10)
            ue = self.predictor.predict(enb_id, m % 10)
            vec = None
            if ue is not None or not self.params.per_ue_schedule:
                ue = ue or "*"
                if kind is Kind.U and not self.params.optimize_uplink:
                    dl = self.units.get((enb_id, ue if self.params.per_ue_schedule else "*", "DL"))
                    vec = dl.bf.best_theta if dl else None
                else:
                    unit = self._unit(enb_id, ue, "UL" if kind is Kind.U else "DL")
                    vec = unit.bf.theta
                    owners[enb_id] = (unit.key, unit.bf.state.iteration)
            if vec is None:
                vec = self._fallback(enb_id)
            if vec is not None:
                levels[paths] = vec.as_array()
        return levels, owners

    # -- observations -------------------------------------------------------------

    def ingest(self, step: StepResult) -> None:
        dci, rsrp, researched = self.sniffer.observe(step)
        n = step.clock.absolute_subframe
        if researched:
            self._on_research()
        if self.phase == "sync":
            self._sync_ingest(n, dci, rsrp)
            return
        owners = self._owners.get(n, {})
        for rec in dci:
            self.predictor.record(rec)
            owner = owners.get(rec.enb_id)
            if owner is None:
                continue
            key, iteration = owner
            unit = self.units.get(key)
            if unit is None or unit.bf.state.iteration != iteration:
                continue
            if key[1] != "*" and rec.ue_id != key[1]:
                continue
            if rec.direction != key[2]:
                continue
            unit.window.add(rec)
            unit.count += 1
        if (n + 1 - self._phase_start) % self.params.n_sf == 0:
            self._end_window(step.clock.start_ms + 1.0)

    def _end_window(self, t: float) -> None:
        for unit in self.units.values():
            if unit.count == 0:
                continue
            try:
                if unit.key[1] == "*":
                    m = metric_multi(unit.window)
                else:
                    m = metric_single(unit.window, unit.key[1])
            except UndefinedMetric:
                continue
            event = unit.bf.observe(m)
            unit.window.clear()
            unit.count = 0
            enb, ue, d = unit.key
            self.bf_log.append((t, enb, ue, d, unit.bf.state.iteration, m, unit.bf.m_max, event,
                                int(unit.bf.plateaued)))
        self._maybe_select()

    def _maybe_select(self) -> None:
        if self.selection_done or self.selector is None or not self.selector.active:
            return
        live = [u for u in self.units.values() if u.bf.evaluations > 0 and u.key[2] == "DL"]
        if not live or not all(u.bf.converged for u in live):
            return
        per_enb: dict[str, list[float]] = {}
        for u in live:
            per_enb.setdefault(u.key[0], []).append(u.bf.m_max)
        score = sum(float(np.mean(v)) for v in per_enb.values())
        sel = self.selector
        saved = {k: u.bf.best_theta for k, u in self.units.items()}
        if sel.trial is None:
            sel.score_current(score)
            self._selection_saved = saved
        else:
            kept = sel.report(score)
            if kept:
                self._selection_saved = saved
            else:
                self._apply_assignment(sel.current)
                for k, theta in self._selection_saved.items():
                    if k in self.units:
                        self.units[k].bf.state = type(self.units[k].bf.state).initial(theta)
            if sel.rounds >= self.params.selection_rounds:
                self.selection_done = True
                return
        self._apply_assignment(sel.propose())

    def _on_research(self) -> None:
        found = dict(self.sniffer.tracked)
        if set(found) != set(self._channels):
            self._channels = found
            self.units.clear()
            self.predictor = SchedulePredictor()
            self.selector.reinitialize(sorted(found))
            self.selection_done = not self.selector.active
            self._apply_assignment(self.selector.current)
            return
        moved = [e for e, ch in found.items() if self._channels.get(e) != ch]
        self._channels = found
        if moved:
            self._apply_assignment(self.selector.current)
            for e in moved:
                self.predictor.forget(e)

    # -- synchronization ----------------------------------------------------------

    def _sync_ingest(self, n: int, dci, rsrp) -> None:
        if self._sync_enb is None:
            self._lock(n)
            return
        self._rsrp.extend(s for s in rsrp if s.enb_id == self._sync_enb)
        rel = n + 1 - self._phase_start
        cfg = self.sniffer.configs.get(self._sync_enb) or self.world.enbs[self._sync_enb].frame_config
        ul = [r for r in dci if r.enb_id == self._sync_enb and r.direction == "UL"]
        self._tx[n] = ul[0].ue_id if ul else ("enb" if cfg.kind(n).carries_dci else "idle")
        if self._reference is None:
            if rel == CALIBRATION_MS:
                self._reference = self._calibrate(cfg)
                self._phase_start = n + 1
                self._rsrp = []
            return
        if rel == PROBE_ROUND_MS:
            window = [s for s in self._rsrp
                      if self._phase_start + 10 <= s.time_ms < self._phase_start + 30]
            changes = transmitter_changes(self._tx)
            glitches = glitch_count(window, cfg, self.params.sync_threshold_db, changes)
            est = estimate_time_offset(window, cfg, probe_toggle_times(cfg),
                                       self.params.sync_threshold_db, self._reference, changes)
            if est != 0.0:
                self.sync = self.sync.corrected(est)
            # a correction below one symbol is at the estimator's resolution
            done = abs(est) <= SYMBOL_MS + 1e-9 or self._round >= self.params.sync_rounds
            self.sync_rounds.append(SyncRound(self._round, est, self.residual, glitches,
                                              float(n + 1), done))
            self._round += 1
            self._rsrp = []
            self._tx = {}
            self._phase_start = n + 1
            self._decided.clear()
            if done:
                self._lock(n)

    def _calibrate(self, cfg) -> float:
        """Downlink RSRP under config A minus config B, from frames fully inside each hold."""
        s0 = self._phase_start
        dl = set(cfg.dci_subframes())

        def mean_dl(lo, hi):
            v = [s.rsrp_dbm for s in self._rsrp if lo <= s.time_ms < hi and int(s.time_ms) % 10 in dl]
            return float(np.mean(v)) if v else math.nan

        ref = mean_dl(s0 + 10, s0 + 20) - mean_dl(s0 + 40, s0 + 50)
        return 0.0 if math.isnan(ref) else ref

    def _lock(self, n: int) -> None:
        self.sync = SyncState(self.sync.believed_offset, self.sync.estimate, True)
        self.phase = "track"
        self.sync_locked_at = float(n + 1)
        self._phase_start = n + 1
        self._decided.clear()
