import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cbrs_surface.core import CbrsChannel, Position, free_space_path_loss
from cbrs_surface.records import (
    RATE_TABLE,
    DciRecord,
    dci_rows,
    fmt,
    rate_from_snr,
    read_csv,
    write_csv,
)
from cbrs_surface.scenario import EnbSpec, EventSpec, Scenario, SurfaceSpec, UeSpec
from cbrs_surface.sim import (
    BITS_PER_PRB,
    Sniffer,
    World,
    cell_search,
    derive_rng,
    effective_snr,
    throughput,
)
from cbrs_surface.tdd import SubframeClock


def make_world(ues=(("ue1", 30.0),), enbs=(("enb1", 3580),), events=(), jitter=0.0, env_extra=20.0, **surface):
    sc = Scenario(
        enbs=tuple(EnbSpec(e, CbrsChannel.mhz(f), Position(0.0, 2.0 * i, 1.5)) for i, (e, f) in enumerate(enbs)),
        ues=tuple(UeSpec(u, Position(6.0, 1.0 + 0.5 * i, 1.0), enbs[0][0], d) for i, (u, d) in enumerate(ues)),
        surface=SurfaceSpec(**({"rows": 2, "cols": 4, "origin": Position(3.0, 0.5, 1.5)} | surface)),
        events=tuple(events),
        env_extra_loss_db=env_extra,
        snr_jitter_db=jitter,
    )
    return World(sc)


# -- rate table ----------------------------------------------------------------


def test_rate_from_snr_anchors():
    assert rate_from_snr(-math.inf) == 0
    assert rate_from_snr(-30.0) == 0
    assert RATE_TABLE[rate_from_snr(0.0)] == pytest.approx(0.877)
    assert rate_from_snr(40.0) == 15
    with pytest.raises(ValueError):
        rate_from_snr(math.nan)


@given(st.floats(-50, 50), st.floats(-50, 50))
def test_rate_from_snr_monotone(a, b):
    lo, hi = sorted((a, b))
    assert rate_from_snr(lo) <= rate_from_snr(hi)


@given(st.floats(-20, 30))
def test_rate_never_exceeds_capacity(snr):
    assert RATE_TABLE[rate_from_snr(snr)] <= math.log2(1 + 10 ** (snr / 10)) + 1e-12


def test_dci_record_validation():
    with pytest.raises(ValueError):
        DciRecord(SubframeClock(), "e", "u", "XL", 3, 10)
    with pytest.raises(ValueError):
        DciRecord(SubframeClock(), "e", "u", "DL", 16, 10)


def test_csv_roundtrip(tmp_path):
    recs = [DciRecord(SubframeClock(0, i), "enb1", "ue1", "DL", 5, 10) for i in (0, 1)]
    write_csv(tmp_path / "d.csv", ("timestamp", "enb", "ue", "dir", "rate_index", "n_prb"), dci_rows(recs))
    rows = read_csv(tmp_path / "d.csv")
    assert [r["timestamp"] for r in rows] == ["0.000", "1.000"]
    assert rows[1]["rate_index"] == "5"
    assert fmt(-0.0, 2) == "0.00"


# -- link model ------------------------------------------------------------------


def test_disabled_surface_equals_environment_only():
    w = make_world()
    link = w.ue_link("enb1", "ue1")
    assert np.all(link.paths == 0)
    d = Position(0, 0, 1.5).distance_to(Position(6, 1, 1))
    expected = -10.0 - free_space_path_loss(d, 3580e6) - 20.0 + 94.0
    assert effective_snr(w, "enb1", "ue1") == pytest.approx(expected, abs=1e-9)


def test_out_of_band_filter_barely_moves_snr():
    # free-space environment path; with extra clutter loss the element matters more
    w = make_world(rows=1, cols=1, paths_per_element=1, env_extra=0.0)
    base = effective_snr(w, "enb1", "ue1")
    w.surface.configure_path(0, center=3640e6, enabled=True)
    vals = [effective_snr(w, "enb1", "ue1", levels=[lv]) for lv in range(16)]
    assert max(abs(v - base) for v in vals) < 0.2


def test_coherent_identical_elements():
    w = make_world(paths_per_element=1)
    for p in range(8):
        w.surface.configure_path(p, center=3580e6, enabled=True)
    link = w.ue_link("enb1", "ue1")
    single = np.zeros_like(link.paths)
    single[0] = abs(link.paths[0])
    same = np.full_like(link.paths, abs(link.paths[0]))
    p1 = 10 * math.log10(abs(single.sum()) ** 2)
    pk = 10 * math.log10(abs(same.sum()) ** 2)
    assert pk - p1 == pytest.approx(20 * math.log10(8))


def test_links_reciprocal():
    w = make_world()
    for p in range(w.surface.path_count):
        w.surface.configure_path(p, center=3580e6, enabled=True)
    dl, ul = w.ue_link("enb1", "ue1", "DL"), w.ue_link("enb1", "ue1", "UL")
    assert dl.env == pytest.approx(ul.env)
    assert np.allclose(dl.paths, ul.paths)


def test_blockage_hits_environment_path_only():
    w = make_world(events=[EventSpec(0.0, "blockage_on", "ue1", 10.0)])
    for p in range(w.surface.path_count):
        w.surface.configure_path(p, center=3580e6, enabled=True)
    before = w.ue_link("enb1", "ue1")
    w.step_subframe()
    after = w.ue_link("enb1", "ue1")
    assert 20 * math.log10(abs(before.env) / abs(after.env)) == pytest.approx(10.0)
    assert np.allclose(before.paths, after.paths)


def test_effective_snr_checks_serving():
    w = make_world(enbs=(("enb1", 3580), ("enb2", 3640)))
    with pytest.raises(ValueError):
        effective_snr(w, "enb2", "ue1")
    with pytest.raises(KeyError):
        effective_snr(w, "enb1", "nobody")


def test_phase_levels_validated():
    w = make_world()
    with pytest.raises(ValueError):
        w.surface.set_phases(np.full(w.surface.path_count, 16))
    with pytest.raises(ValueError):
        w.surface.configure_path(0, center=3500e6)


# -- stepping ----------------------------------------------------------------------


def test_zero_demand_world_emits_rsrp_only():
    w = make_world(ues=(("ue1", 0.0),))
    for _ in range(10):
        step = w.step_subframe()
        assert step.dci == ()
        assert len(step.rsrp) == 14


def test_no_downlink_dci_in_uplink_subframes():
    w = make_world()
    for _ in range(20):
        step = w.step_subframe()
        kind = "UL" if step.clock.subframe_index in (2, 3, 4, 7, 8, 9) else "DL"
        assert [r.direction for r in step.dci] == [kind]


def test_round_robin_alternates_on_downlink():
    w = make_world(ues=(("ue1", 20.0), ("ue2", 20.0)))
    d_ues = []
    for _ in range(20):
        step = w.step_subframe()
        if step.clock.subframe_index in (0, 5):
            d_ues.append(step.dci[0].ue_id)
    assert d_ues == ["ue1", "ue2"] * 2


def test_special_subframe_carries_zero_prb_dci():
    w = make_world()
    steps = [w.step_subframe() for _ in range(10)]
    s = steps[1].dci[0]
    assert s.direction == "DL" and s.n_prb == 0 and s.ue_id == steps[0].dci[0].ue_id


def test_prb_allocation_proportional_with_cap():
    w = make_world(ues=(("ue1", 10.0),))
    assert w.step_subframe().dci[0].n_prb == 25
    w = make_world(ues=(("ue1", 400.0),))
    assert w.step_subframe().dci[0].n_prb == 100


def test_program_changes_phases_mid_subframe():
    w = make_world(paths_per_element=1)
    for p in range(8):
        w.surface.configure_path(p, center=3580e6, enabled=True)
    zero, flip = np.zeros(8, int), np.full(8, 8)
    step = w.step_subframe([(0.0, zero), (0.5, flip)])
    levels = [s.rsrp_dbm for s in step.rsrp]
    assert levels[0] == pytest.approx(levels[6])
    assert levels[7] == pytest.approx(levels[13])
    assert abs(levels[0] - levels[7]) > 0.01
    assert list(w.surface.phases) == list(flip)
    with pytest.raises(ValueError):
        w.step_subframe([(0.2, zero)])


def test_snr_csv_has_true_value_and_dci_has_jitter():
    w = make_world(jitter=3.0)
    idx = set()
    for _ in range(200):
        step = w.step_subframe()
        for r in step.dci:
            if r.direction == "DL" and r.n_prb:
                idx.add(r.rate_index)
    assert len(idx) > 1


# -- cell search and sniffer ---------------------------------------------------------


def test_cell_search_finds_all_and_follows_retune():
    w = make_world(enbs=(("enb1", 3580), ("enb2", 3620)),
                   events=[EventSpec(1.0, "enb_retune", "enb1", CbrsChannel.mhz(3660))])
    assert [(e, c.center_mhz) for e, c in cell_search(w)] == [("enb1", 3580), ("enb2", 3620)]
    w.step_subframe()
    w.step_subframe()
    assert dict((e, c.center_mhz) for e, c in cell_search(w))["enb1"] == 3660


def test_cell_search_empty_when_inactive():
    w = make_world(events=[EventSpec(0.0, "enb_active", "enb1", False)])
    w.step_subframe()
    assert cell_search(w) == []


def test_sniffer_reacquires_after_retune():
    w = make_world(events=[EventSpec(100.0, "enb_retune", "enb1", CbrsChannel.mhz(3660))])
    sn = Sniffer(w)
    sn.search()
    research = []
    for n in range(200):
        dci, rsrp, again = sn.observe(w.step_subframe())
        if again:
            research.append(n)
    assert research and 100 <= research[0] <= 121
    assert sn.tracked["enb1"].center_mhz == 3660


# -- throughput and seeding ------------------------------------------------------------


def test_throughput():
    assert throughput([], 1000) == {}
    recs = [DciRecord(SubframeClock(0, 0).advance(i), "e", "u", "DL", 10, 50) for i in range(100)]
    tp = throughput(recs, 100.0)[("e", "u", "DL")]
    assert tp == pytest.approx(RATE_TABLE[10] * 50 * BITS_PER_PRB * 100 / 1e5)
    assert throughput(recs, 0) == {}


def test_derived_streams_independent():
    a = derive_rng(1, "airlink").random(3)
    b = derive_rng(1, "beamform").random(3)
    assert not np.allclose(a, b)
    assert np.allclose(a, derive_rng(1, "airlink").random(3))
