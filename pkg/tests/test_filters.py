import math

import numpy as np
import pytest
from scipy.optimize import brentq
from hypothesis import given, settings, strategies as st

from cbrs_surface.filters import (
    FilterResponse,
    InfeasibleDesignError,
    NoResonanceError,
    ResonatorParams,
    TunableFilter,
    VaractorLaw,
    VaractorState,
    even_mode_admittance,
    odd_mode_admittance,
    out_of_band_rejection,
    resonant_frequencies,
    response_at,
)


@pytest.fixture(scope="module")
def tuned():
    return TunableFilter.solve()


def test_odd_mode_admittance_formula():
    p = ResonatorParams(0.02, 0.01, 1.0, 0.5)
    f, c = 3.6e9, 0.4e-12
    expected = 2 * math.pi * f * c - 0.02 / math.tan(1.0)
    assert odd_mode_admittance(p, c, f) == pytest.approx(expected, rel=1e-12)


def test_even_mode_without_loading_element():
    p = ResonatorParams(0.02, 0.0, 1.0, 0.5, l1=0.0)
    f, c = 3.5e9, 0.4e-12
    t = math.tan(1.0 * f / 3.6e9)
    assert even_mode_admittance(p, c, f) == pytest.approx(2 * math.pi * f * c + 0.02 * t, rel=1e-12)


def test_resonances_fall_with_capacitance(tuned):
    p = tuned.design.params
    lo = resonant_frequencies(p, 0.37e-12)
    hi = resonant_frequencies(p, 0.43e-12)
    assert hi[0] < lo[0] and hi[1] < lo[1]


def test_roots_are_roots(tuned):
    p = tuned.design.params
    for v in (3.0, 3.7, 4.5):
        c = tuned.law.capacitance(v)
        f_odd, f_even = tuned.edges_at_bias(v)
        assert abs(odd_mode_admittance(p, c, f_odd)) < 1e-9
        assert abs(even_mode_admittance(p, c, f_even)) < 1e-9
        assert f_odd < f_even


def test_no_resonance_reported():
    p = ResonatorParams(0.02, 0.0, 0.3, 0.5, l1=0.0)
    with pytest.raises(NoResonanceError):
        resonant_frequencies(p, 1e-15, search_band=(3.5e9, 3.6e9))


def test_tuning_covers_cbrs(tuned):
    assert tuned.center_at_bias(3.0) == pytest.approx(3550e6, abs=1e6)
    assert tuned.center_at_bias(4.5) == pytest.approx(3700e6, abs=1e6)
    assert tuned.design.rate_mismatch < 0.01


def test_sweep_monotone(tuned):
    rows = tuned.sweep(12)
    centers = [r[4] for r in rows]
    assert len(rows) == 12
    assert all(b > a for a, b in zip(centers, centers[1:]))
    for v, c, f_odd, f_even, fc in rows:
        assert fc == pytest.approx(0.5 * (f_odd + f_even))
        assert 15e6 < f_even - f_odd < 25e6


@settings(max_examples=10, deadline=None)
@given(st.floats(3560e6, 3690e6))
def test_bias_for_center_roundtrip(tuned, center):
    v = tuned.bias_for_center(center)
    assert 3.0 <= v <= 4.5
    assert tuned.center_at_bias(v) == pytest.approx(center, abs=1e3)


def test_bias_for_center_outside_range(tuned):
    with pytest.raises(ValueError):
        tuned.bias_for_center(3500e6)


def test_infeasible_bias_window():
    with pytest.raises(InfeasibleDesignError):
        TunableFilter.solve(bias_lo=4.4, bias_hi=4.5)


def test_varactor_law():
    law = VaractorLaw()
    assert law.capacitance(3.0) > law.capacitance(4.5)
    assert law.bias(law.capacitance(3.7)) == pytest.approx(3.7)
    assert VaractorState.at(3.0).capacitance == pytest.approx(law.capacitance(3.0))
    with pytest.raises(ValueError):
        law.capacitance(7.0)


def test_behavioral_response():
    r = FilterResponse(3600e6)
    assert response_at(r, 3600e6) == pytest.approx(-6.1)
    assert response_at(r, 3609e6) == pytest.approx(-6.1)
    assert response_at(r, 3630e6) == pytest.approx(-6.1 - 3.23)
    assert response_at(r, 5000e6) == pytest.approx(-46.1)
    assert out_of_band_rejection(r, 3600e6) == 0.0
    assert out_of_band_rejection(r, 3650e6) == pytest.approx(-3.23 * 2)
    assert r.retuned(3560e6).center == 3560e6
    arr = response_at(r, np.array([3600e6, 3700e6]))
    assert arr.shape == (2,)
    with pytest.raises(ValueError):
        FilterResponse(3600e6, insertion_loss=1.0)


def test_odd_root_tends_to_quarter_wave():
    p = ResonatorParams(0.02, 0.01, 1.2, 0.5)
    f_odd = brentq(lambda f: odd_mode_admittance(p, 1e-21, f), 4.0e9, 5.5e9, xtol=1e-3)
    assert p.theta_o(f_odd) == pytest.approx(math.pi / 2, abs=1e-6)


def test_even_and_odd_roots_differ_with_loading(tuned):
    f_odd, f_even = tuned.design.edges(tuned.law.capacitance(3.5))
    assert abs(f_even - f_odd) > 1e6


@given(st.floats(0, 200e6))
def test_response_symmetric(delta):
    r = FilterResponse(3620e6)
    assert response_at(r, 3620e6 + delta) == pytest.approx(response_at(r, 3620e6 - delta))
