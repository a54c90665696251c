"""Experiment orchestration: runs, CSV outputs, summaries, and canned demos."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .controller.agent import SurfaceController
from .controller.selection import balanced_assignment
from .core import CbrsChannel, ElementGainChain, Position, element_path_loss, surface_gain
from .records import (
    DCI_COLUMNS,
    RSRP_COLUMNS,
    SNR_COLUMNS,
    THROUGHPUT_COLUMNS,
    DciRecord,
    dci_rows,
    fmt,
    read_csv,
    rsrp_rows,
    snr_rows,
    write_csv,
    RATE_TABLE,
)
from .scenario import ControllerParams, EnbSpec, Scenario, SurfaceSpec, UeSpec, load_scenario
from .sim import BITS_PER_PRB, World, derive_rng, throughput

MODES = ("baseline", "amp_only", "waveflex")
MIN_DURATION_MS = 1000

SYNC_COLUMNS = ("round", "estimate_ms", "residual_ms", "glitches")
COMMAND_COLUMNS = ("time", "element", "path", "phase", "filter_center")
BEAMFORM_COLUMNS = ("time", "enb", "ue", "dir", "iteration", "metric", "m_max", "event", "plateau")
SUMMARY_COLUMNS = ("enb", "ue", "dir", "mean_snr_db", "mean_mbps")
LINKBUDGET_COLUMNS = ("k", "l_env_db", "g_s_db", "g_s_coherent_db")


@dataclass(frozen=True)
class ExperimentSpec:
    scenario: Union[str, Path, Scenario]
    duration_ms: int = 5000
    mode: str = "waveflex"
    out_dir: Optional[Union[str, Path]] = None
    seed: Optional[int] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {', '.join(MODES)}")
        if self.duration_ms < MIN_DURATION_MS:
            raise ValueError(f"duration must be >= {MIN_DURATION_MS} ms")

    def load(self) -> Scenario:
        sc = self.scenario if isinstance(self.scenario, Scenario) else load_scenario(self.scenario)
        return sc if self.seed is None else replace(sc, seed=self.seed)


@dataclass(frozen=True)
class RunSummary:
    links: dict[tuple[str, str, str], tuple[float, float]]  # -> (mean SNR dB, mean Mbps)
    sync_convergence_ms: Optional[float]
    bf_iterations_to_plateau: Optional[int]
    duration_ms: int
    mode: str

    def mean_snr(self, direction: str = "DL") -> float:
        vals = [v[0] for k, v in self.links.items() if k[2] == direction]
        return float(np.mean(vals)) if vals else math.nan

    def mean_mbps(self, direction: str = "DL") -> float:
        vals = [v[1] for k, v in self.links.items() if k[2] == direction]
        return float(np.mean(vals)) if vals else 0.0


# -- running ---------------------------------------------------------------


def _configure_amp_only(world: World, seed: int) -> list[tuple]:
    """All paths on, zero phases, filters split evenly over the eNBs."""
    ids = sorted(e.id for e in world.enbs.values() if e.active)
    assign = balanced_assignment(world.surface.path_count, ids, derive_rng(seed, "selection"))
    cmds = []
    for p, owner in enumerate(assign.owners):
        if owner is None:
            continue
        center = world.enbs[owner].channel.center_frequency
        world.surface.configure_path(p, center=center, enabled=True)
        cmds.append((0.0, world.surface.element_of(p), p % world.surface.paths, 0.0, center))
    return cmds


def simulate(scenario: Scenario, duration_ms: int, mode: str):
    """Run the world for ``duration_ms`` subframes; returns (world, controller, steps)."""
    world = World(scenario)
    ctrl = None
    commands: list[tuple] = []
    if mode == "amp_only":
        commands = _configure_amp_only(world, scenario.seed)
    elif mode == "waveflex":
        ctrl = SurfaceController(world, scenario.controller, scenario.seed)
    steps = []
    for n in range(duration_ms):
        prog = ctrl.program(n) if ctrl else None
        step = world.step_subframe(prog)
        if ctrl:
            ctrl.ingest(step)
        steps.append(step)
    if ctrl:
        commands = ctrl.commands
    return world, ctrl, steps, commands


def run(spec: ExperimentSpec) -> RunSummary:
    scenario = spec.load()
    world, ctrl, steps, commands = simulate(scenario, spec.duration_ms, spec.mode)
    out = Path(spec.out_dir) if spec.out_dir is not None else None
    if out is None:
        import tempfile

        with tempfile.TemporaryDirectory() as tmp:
            write_outputs(Path(tmp), spec, scenario, ctrl, steps, commands)
            return summarize(Path(tmp))
    out.mkdir(parents=True, exist_ok=True)
    write_outputs(out, spec, scenario, ctrl, steps, commands)
    return summarize(out)


def write_outputs(out: Path, spec: ExperimentSpec, scenario: Scenario, ctrl, steps, commands) -> None:
    dci = [r for s in steps for r in s.dci]
    write_csv(out / "dci.csv", DCI_COLUMNS, dci_rows(dci))
    write_csv(out / "rsrp.csv", RSRP_COLUMNS, rsrp_rows(r for s in steps for r in s.rsrp))
    write_csv(out / "snr.csv", SNR_COLUMNS, snr_rows(r for s in steps for r in s.snr))
    tp = throughput(dci, spec.duration_ms)
    write_csv(out / "throughput.csv", THROUGHPUT_COLUMNS,
              ((e, u, d, fmt(v, 4)) for (e, u, d), v in sorted(tp.items())))
    write_csv(out / "commands.csv", COMMAND_COLUMNS,
              ((fmt(t, 4), el, p, fmt(lv * 2 * math.pi / 16, 6),
                "" if c is None or (isinstance(c, float) and math.isnan(c)) else fmt(c / 1e6, 1))
               for t, el, p, lv, c in commands))
    bf = ctrl.bf_log if ctrl else []
    write_csv(out / "beamform.csv", BEAMFORM_COLUMNS,
              ((fmt(t, 1), e, u, d, it, fmt(m, 6), fmt(mm, 6), ev, pl) for t, e, u, d, it, m, mm, ev, pl in bf))
    rounds = ctrl.sync_rounds if ctrl else []
    write_csv(out / "sync.csv", SYNC_COLUMNS + ("time_ms", "locked"),
              ((r.round, fmt(r.estimate_ms, 4), fmt(r.residual_ms, 4), r.glitches, fmt(r.time_ms, 1), int(r.locked))
               for r in rounds))
    write_csv(out / "run.csv", ("key", "value"),
              [("mode", spec.mode), ("duration_ms", spec.duration_ms), ("seed", scenario.seed)])


def summarize(out: Path) -> RunSummary:
    """Recompute every summary figure from the CSVs in ``out``; writes summary.csv."""
    meta = {r["key"]: r["value"] for r in read_csv(out / "run.csv")}
    duration = int(meta["duration_ms"])
    snr: dict[tuple, list[float]] = defaultdict(list)
    for r in read_csv(out / "snr.csv"):
        snr[(r["enb"], r["ue"], r["dir"])].append(float(r["snr_db"]))
    bits: dict[tuple, float] = defaultdict(float)
    for r in read_csv(out / "dci.csv"):
        bits[(r["enb"], r["ue"], r["dir"])] += RATE_TABLE[int(r["rate_index"])] * int(r["n_prb"]) * BITS_PER_PRB
    keys = sorted(set(snr) | set(bits))
    links = {k: (float(np.mean(snr[k])) if snr[k] else math.nan, bits[k] / (duration * 1e3)) for k in keys}
    sync_rows = read_csv(out / "sync.csv")
    locked = [float(r["time_ms"]) for r in sync_rows if r["locked"] == "1"]
    bf_rows = read_csv(out / "beamform.csv")
    plateau = [int(r["iteration"]) for r in bf_rows if r["plateau"] == "1"]
    summary = RunSummary(links, locked[0] if locked else None, plateau[0] if plateau else None,
                         duration, meta["mode"])
    write_csv(out / "summary.csv", SUMMARY_COLUMNS,
              ((e, u, d, fmt(s, 4), fmt(m, 4)) for (e, u, d), (s, m) in links.items()))
    return summary


# -- canned scenarios --------------------------------------------------------


def desk_scenario(
    ue_position: Position = Position(6.0, 1.5, 1.0),
    seed: int = 0,
    clock_offset_ms: float = 0.0,
    snr_jitter_db: float = 1.0,
    duration_hint: int = 0,
) -> Scenario:
    """One eNB, one UE, an 8-element surface between them across a cluttered desk."""
    return Scenario(
        enbs=(EnbSpec("enb1", CbrsChannel.mhz(3580), Position(0.0, 0.0, 1.5), -10.0),),
        ues=(UeSpec("ue1", ue_position, "enb1", 30.0),),
        surface=SurfaceSpec(rows=2, cols=4, spacing_m=0.15, origin=Position(3.0, 0.5, 1.5)),
        seed=seed,
        env_extra_loss_db=26.0,
        snr_jitter_db=snr_jitter_db,
        sniffer=Position(3.3, 0.8, 1.2),
        controller=ControllerParams(clock_offset_ms=clock_offset_ms),
    )


def random_placements(n: int, seed: int = 0) -> list[Position]:
    rng = derive_rng(seed, "placements")
    return [Position(float(rng.uniform(4.5, 7.5)), float(rng.uniform(-1.0, 2.5)), 1.0) for _ in range(n)]


# -- link budget and sync demos ------------------------------------------------


def linkbudget_sweep(
    k_values: Iterable[int],
    l_env_values: Iterable[float],
    d_b: float = 3.0,
    d_u: float = 3.0,
    f: float = 3.6e9,
    chain: ElementGainChain = ElementGainChain(),
) -> list[tuple[int, float, float, float]]:
    l_ele = -element_path_loss(d_b, d_u, f, chain)
    rows = []
    for k in k_values:
        if k < 1:
            raise ValueError("k must be >= 1")
        for l_env in l_env_values:
            rows.append((k, float(l_env), surface_gain(k, 0.0, l_ele, l_env),
                         surface_gain(k, 0.0, l_ele, l_env, coherent=True)))
    return rows


def write_linkbudget(path, rows) -> None:
    write_csv(Path(path), LINKBUDGET_COLUMNS, ((k, fmt(l, 3), fmt(g, 6), fmt(gc, 6)) for k, l, g, gc in rows))


def sync_demo(offset_ms: float, max_ms: int = 600) -> list[tuple[int, float, float, int]]:
    """Run clock recovery for a controller switching ``offset_ms`` late.

    Returns (round, estimate_ms, residual_ms, glitches) per probe round.
    """
    if not 0 <= offset_ms < 10:
        raise ValueError("offset must lie in [0, 10) ms")
    sc = desk_scenario(clock_offset_ms=offset_ms, snr_jitter_db=0.0)
    world = World(sc)
    ctrl = SurfaceController(world, sc.controller, sc.seed)
    n = 0
    while ctrl.phase == "sync" and n < max_ms:
        step = world.step_subframe(ctrl.program(n))
        ctrl.ingest(step)
        n += 1
    return [(r.round, r.estimate_ms, r.residual_ms, r.glitches) for r in ctrl.sync_rounds]


def write_sync_trace(path, rows) -> None:
    write_csv(Path(path), SYNC_COLUMNS, ((r, fmt(e, 4), fmt(res, 4), g) for r, e, res, g in rows))
