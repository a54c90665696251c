import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cbrs_surface.core import (
    PHASE_STEP,
    CbrsChannel,
    DomainError,
    ElementGainChain,
    PhaseVector,
    Position,
    element_gain,
    element_path_loss,
    free_space_path_loss,
    link_budget,
    quantize_phase,
    surface_gain,
    wavelength,
)


def test_fspl_matches_formula():
    d, f = 3.0, 3.6e9
    expected = 20 * math.log10(4 * math.pi * d * f / 299_792_458.0)
    assert free_space_path_loss(d, f) == pytest.approx(expected, abs=1e-12)
    assert free_space_path_loss(1.0, 3.6e9) == pytest.approx(43.57, abs=0.01)


@pytest.mark.parametrize("d,f", [(0.0, 3.6e9), (-1.0, 3.6e9), (1.0, 0.0)])
def test_fspl_rejects_nonpositive(d, f):
    with pytest.raises(DomainError):
        free_space_path_loss(d, f)


def test_fspl_doubling_distance_adds_6db():
    assert free_space_path_loss(4.0, 3.6e9) - free_space_path_loss(2.0, 3.6e9) == pytest.approx(20 * math.log10(2))


def test_element_gain_default_chain():
    assert element_gain(ElementGainChain()) == pytest.approx(8.79, abs=1e-9)


def test_chain_rejects_negative_loss():
    with pytest.raises(ValueError):
        ElementGainChain(l_phase=-2.5)


def test_element_path_loss_is_gain_minus_two_hops():
    chain = ElementGainChain()
    got = element_path_loss(3.0, 4.0, 3.6e9, chain)
    assert got == pytest.approx(8.79 - free_space_path_loss(3.0, 3.6e9) - free_space_path_loss(4.0, 3.6e9))


@given(st.integers(1, 64), st.floats(20, 120), st.floats(20, 120))
def test_surface_gain_log_identity(k, l_ele, l_env):
    assert surface_gain(k, 0.0, l_ele, l_env) - surface_gain(1, 0.0, l_ele, l_env) == pytest.approx(
        10 * math.log10(k), abs=1e-9)
    assert surface_gain(k, 0.0, l_ele, l_env, coherent=True) - surface_gain(1, 0.0, l_ele, l_env) == pytest.approx(
        20 * math.log10(k), abs=1e-9)


@given(st.floats(-30, 30))
def test_surface_gain_independent_of_tx_power(p_b):
    assert surface_gain(8, p_b, 60.0, 80.0) == pytest.approx(surface_gain(8, 0.0, 60.0, 80.0))


def test_surface_gain_monotone_in_env_loss():
    vals = [surface_gain(4, 0.0, 60.0, l) for l in range(60, 101, 10)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_surface_gain_needs_an_element():
    with pytest.raises(DomainError):
        surface_gain(0, 0.0, 60.0, 80.0)


def test_link_budget_consistent():
    r = link_budget(3.0, 3.0, 3.6e9, 16, 80.0)
    assert r.l_ele == pytest.approx(r.g_ele - r.l_be - r.l_eu)
    assert r.g_s == pytest.approx(10 * math.log10(16) + 80.0 + r.l_ele)


def test_wavelength():
    assert wavelength(3.6e9) == pytest.approx(0.08328, abs=1e-5)


def test_channel_grid_and_prbs():
    ch = CbrsChannel.mhz(3580)
    assert ch.prb_budget == 100
    assert CbrsChannel.mhz(3560, 10).prb_budget == 50
    assert ch.center_mhz == 3580
    with pytest.raises(ValueError):
        CbrsChannel.mhz(3545)
    with pytest.raises(ValueError):
        CbrsChannel.mhz(3583)
    with pytest.raises(ValueError):
        CbrsChannel.mhz(3695)


def test_channel_overlap():
    assert CbrsChannel.mhz(3580).overlaps(CbrsChannel.mhz(3590))
    assert not CbrsChannel.mhz(3580).overlaps(CbrsChannel.mhz(3600))


@given(st.lists(st.floats(-20, 20), min_size=1, max_size=16))
def test_quantize_phase_in_range(phases):
    q = quantize_phase(phases)
    assert np.all((q >= 0) & (q < 16))


def test_phase_vector_wraps_and_quantizes():
    v = PhaseVector.zeros(3).shifted([-1, 0, 17])
    assert v.levels == (15, 0, 1)
    q = PhaseVector.quantized([0.0, PHASE_STEP * 2.4, 2 * math.pi - 0.01])
    assert q.levels == (0, 2, 0)
    assert PhaseVector.from_phases([PHASE_STEP * 3]).levels == (3,)
    with pytest.raises(ValueError):
        PhaseVector((16,))
    with pytest.raises(ValueError):
        PhaseVector.from_phases([0.1])


def test_position_distance():
    assert Position(0, 0, 0).distance_to(Position(3, 4, 0)) == pytest.approx(5.0)
    assert Position.of([1, 2, 3]).moved(1, 1, 1) == Position(2, 3, 4)
