"""Independent reference computations used by the tests.

Every oracle here is an exhaustive search or a direct formula evaluation,
kept apart from the code under test.
"""

from __future__ import annotations

import itertools

import numpy as np

from cbrs_surface.core import PHASE_STEP, CbrsChannel, Position
from cbrs_surface.scenario import EnbSpec, Scenario, SurfaceSpec, UeSpec
from cbrs_surface.sim import World, derive_rng

ALL_K4 = np.array(list(itertools.product(range(16), repeat=4)))
ROT_K4 = np.exp(1j * PHASE_STEP * ALL_K4)


def k4_world(seed: int) -> World:
    """Static noiseless link through four single-path elements, geometry drawn from seed."""
    rng = derive_rng(seed, "oracle-geometry")
    ue = Position(float(rng.uniform(4.0, 7.0)), float(rng.uniform(0.5, 2.5)), 1.0)
    sc = Scenario(
        enbs=(EnbSpec("enb1", CbrsChannel.mhz(3580), Position(0.0, 0.0, 1.5)),),
        ues=(UeSpec("ue1", ue, "enb1"),),
        env_extra_loss_db=20.0,
        snr_jitter_db=0.0,
        surface=SurfaceSpec(rows=2, cols=2, spacing_m=float(rng.uniform(0.1, 0.3)),
                            origin=Position(3.0, 0.5, 1.5), paths_per_element=1),
    )
    w = World(sc)
    for p in range(4):
        w.surface.configure_path(p, center=3580e6, enabled=True)
    return w


def brute_force_k4(link) -> np.ndarray:
    """Received power (dBm) for all 65,536 settings of a 4-path link."""
    return 10.0 * np.log10(np.abs(link.env + ROT_K4 @ link.paths) ** 2)


def best_power_dbm(link, n_paths: int) -> float:
    """Exhaustive optimum over 16**n_paths settings (small n only)."""
    grid = np.array(list(itertools.product(range(16), repeat=n_paths)))
    rot = np.exp(1j * PHASE_STEP * grid)
    return float(10.0 * np.log10(np.max(np.abs(link.env + rot @ link.paths) ** 2)))


def two_enb_world(seed: int) -> World:
    """Two eNBs 130 MHz apart, one UE each, four single-path elements."""
    rng = derive_rng(seed, "oracle-two-enb")
    ue1 = Position(float(rng.uniform(4.0, 7.0)), float(rng.uniform(0.5, 2.5)), 1.0)
    ue2 = Position(float(rng.uniform(4.0, 7.0)), float(rng.uniform(-2.0, 0.0)), 1.0)
    positions = tuple(Position(3.0, float(y), float(z))
                      for y, z in zip(rng.uniform(-1.0, 1.5, 4), rng.uniform(1.0, 2.0, 4)))
    sc = Scenario(
        enbs=(EnbSpec("enb1", CbrsChannel.mhz(3560), Position(0.0, 0.0, 1.5)),
              EnbSpec("enb2", CbrsChannel.mhz(3690), Position(0.0, 1.0, 1.5))),
        ues=(UeSpec("ue1", ue1, "enb1"), UeSpec("ue2", ue2, "enb2")),
        env_extra_loss_db=20.0,
        snr_jitter_db=0.0,
        surface=SurfaceSpec(positions=positions, paths_per_element=1),
    )
    return World(sc)


def converged_metrics(world: World, owners) -> dict[str, float]:
    """Per-eNB received power after exhaustive phase search over that eNB's paths."""
    s = world.surface
    for p, o in enumerate(owners):
        s.configure_path(p, center=world.enbs[o].channel.center_frequency, enabled=True)
    out = {}
    for enb, ue in (("enb1", "ue1"), ("enb2", "ue2")):
        link = world.ue_link(enb, ue)
        mine = [p for p, o in enumerate(owners) if o == enb]
        grid = np.array(list(itertools.product(range(16), repeat=len(mine))))
        rot = np.exp(1j * PHASE_STEP * grid)
        others = sum(link.paths[p] for p in range(len(owners)) if p not in mine)
        total = link.env + others + rot @ link.paths[mine]
        out[enb] = float(10.0 * np.log10(np.max(np.abs(total) ** 2)))
    return out


def balanced_owner_tuples(n_paths: int = 4) -> list[tuple[str, ...]]:
    out = []
    for first in itertools.combinations(range(n_paths), n_paths // 2):
        out.append(tuple("enb1" if p in first else "enb2" for p in range(n_paths)))
    return out
