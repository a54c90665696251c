"""Varactor-tuned dual-mode open-loop band-pass filter.

Two parts live here: the admittance model that places the odd- and
even-mode resonances (the pass-band edges) and a behavioral response model
(flat pass band, linear-in-dB roll-off) used by the air-link simulator.

Electrical lengths scale with frequency, ``theta(f) = theta_ref * f / f_ref``.
The loading element at the symmetry plane is a stub ``(Y_e, theta_e)``
terminated to ground through the inductor ``L1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .core import CBRS_HIGH_HZ, CBRS_LOW_HZ

F_REF_HZ = 3.6e9
DEFAULT_L1 = 0.5e-9
DEFAULT_SEARCH_BAND = (3.0e9, 4.5e9)
ROOT_RESIDUAL_S = 1e-9

MEASURED_INSERTION_LOSS_DB = -6.1
SIMULATED_INSERTION_LOSS_DB = -3.6  # midpoint of the simulated -3.5 .. -3.75 dB
ROLLOFF_DB_PER_20MHZ = 3.23
PASSBAND_HALF_WIDTH_HZ = 10e6
MAX_REJECTION_DB = 40.0


class PoleError(ArithmeticError):
    """Admittance evaluated on a pole of the tangent terms."""


class NoResonanceError(ValueError):
    """No sign change of the modal susceptance inside the search band."""


class InfeasibleDesignError(ValueError):
    """Requested tuning targets cannot be met by the circuit model."""


@dataclass(frozen=True)
class ResonatorParams:
    y_o: float  # S
    y_e: float  # S
    theta_o_ref: float  # rad at f_ref
    theta_e_ref: float  # rad at f_ref
    f_ref: float = F_REF_HZ
    l1: float = DEFAULT_L1  # H

    def __post_init__(self):
        if self.y_o <= 0 or self.y_e < 0:
            raise ValueError("admittances must be positive")
        if not 0 < self.theta_o_ref < math.pi or not 0 <= self.theta_e_ref < math.pi:
            raise ValueError("electrical lengths at f_ref must lie in (0, pi)")
        if self.l1 < 0:
            raise ValueError("l1 must be >= 0")

    def theta_o(self, f):
        return self.theta_o_ref * np.asarray(f, dtype=float) / self.f_ref

    def theta_e(self, f):
        return self.theta_e_ref * np.asarray(f, dtype=float) / self.f_ref


@dataclass(frozen=True)
class VaractorLaw:
    """Abrupt-junction law C(V) = c0 * (1 + V/phi)**(-gamma)."""

    c0: float = 1.0e-12
    phi: float = 0.7
    gamma: float = 0.5
    v_min: float = 2.0
    v_max: float = 6.0

    def capacitance(self, bias):
        v = np.asarray(bias, dtype=float)
        if np.any(v < self.v_min - 1e-12) or np.any(v > self.v_max + 1e-12):
            raise ValueError(f"bias must lie in [{self.v_min}, {self.v_max}] V")
        c = self.c0 * (1.0 + v / self.phi) ** (-self.gamma)
        return float(c) if c.ndim == 0 else c

    def bias(self, capacitance: float) -> float:
        v = self.phi * ((capacitance / self.c0) ** (-1.0 / self.gamma) - 1.0)
        if not self.v_min - 1e-9 <= v <= self.v_max + 1e-9:
            raise ValueError(f"capacitance {capacitance:.4g} F needs bias {v:.3f} V, outside range")
        return float(v)


@dataclass(frozen=True)
class VaractorState:
    bias_voltage: float
    capacitance: float

    @classmethod
    def at(cls, bias: float, law: VaractorLaw = VaractorLaw()) -> "VaractorState":
        return cls(bias, law.capacitance(bias))


def _tan(x):
    c = np.cos(x)
    if np.any(np.abs(c) < 1e-15):
        raise PoleError("tangent pole")
    return np.sin(x) / c


def loading_susceptance(params: ResonatorParams, f):
    """Susceptance of the loading stub terminated to ground through L1."""
    f = np.asarray(f, dtype=float)
    t_e = _tan(params.theta_e(f))
    if params.l1 == 0:
        return params.y_e * t_e
    b_l = -1.0 / (2 * np.pi * f * params.l1)
    den = params.y_e - b_l * t_e
    if np.any(den == 0):
        raise PoleError("loading stub pole")
    return params.y_e * (b_l + params.y_e * t_e) / den


def odd_mode_admittance(params: ResonatorParams, c_v: float, f):
    """Im[Y_in] of the odd mode: w*C_v - Y_o / tan(theta_o)."""
    f = np.asarray(f, dtype=float)
    if np.any(f <= 0):
        raise ValueError("frequency must be positive")
    s = np.sin(params.theta_o(f))
    if np.any(np.abs(s) < 1e-15):
        raise PoleError("odd-mode pole (theta_o multiple of pi)")
    return 2 * np.pi * f * c_v - params.y_o * np.cos(params.theta_o(f)) / s


def _even_from_load(params: ResonatorParams, c_v: float, f, b_load):
    t_o = _tan(params.theta_o(f))
    den = params.y_o - b_load * t_o
    if np.any(den == 0):
        raise PoleError("even-mode pole")
    return 2 * np.pi * f * c_v + params.y_o * (b_load + params.y_o * t_o) / den


def even_mode_admittance(params: ResonatorParams, c_v: float, f):
    """Im[Y_in] of the even mode, w*C_v + Y_o (B + Y_o tan theta_o) / (Y_o - B tan theta_o).

    ``B`` is the loading-element susceptance; it vanishes with ``y_e``.
    """
    f = np.asarray(f, dtype=float)
    if np.any(f <= 0):
        raise ValueError("frequency must be positive")
    return _even_from_load(params, c_v, f, loading_susceptance(params, f))


def _lowest_root(fun, band, n_grid=3001) -> float:
    lo, hi = band
    grid = np.linspace(lo, hi, n_grid)
    vals = _grid_values(fun, grid)
    for i in range(n_grid - 1):
        a, b = vals[i], vals[i + 1]
        if not (np.isfinite(a) and np.isfinite(b)) or np.sign(a) == np.sign(b):
            continue
        root = brentq(fun, grid[i], grid[i + 1], xtol=1e-6, rtol=4 * np.finfo(float).eps, maxiter=200)
        # a sign change across a pole leaves a large residual
        if abs(fun(root)) < ROOT_RESIDUAL_S:
            return float(root)
    raise NoResonanceError(f"no resonance between {lo / 1e9:.3f} and {hi / 1e9:.3f} GHz")


def _grid_values(fun, grid):
    with np.errstate(all="ignore"):
        try:
            return np.asarray(fun(grid), dtype=float)
        except PoleError:
            pass
        out = np.empty_like(grid)
        for i, x in enumerate(grid):
            try:
                out[i] = fun(x)
            except PoleError:
                out[i] = math.nan
        return out


def resonant_frequencies(
    params: ResonatorParams, c_v: float, search_band=DEFAULT_SEARCH_BAND
) -> tuple[float, float]:
    """Lowest in-band odd- and even-mode resonances (the pass-band edges)."""
    f_odd = _lowest_root(lambda f: odd_mode_admittance(params, c_v, f), search_band)
    f_even = _lowest_root(lambda f: even_mode_admittance(params, c_v, f), search_band)
    return f_odd, f_even


@dataclass(frozen=True)
class FilterDesign:
    params: ResonatorParams
    c_v1: float
    c_v2: float
    band: tuple[float, float]
    bandwidth: float
    tuning_rate_odd: float  # Hz/F
    tuning_rate_even: float  # Hz/F

    @property
    def rate_mismatch(self) -> float:
        return abs(self.tuning_rate_odd - self.tuning_rate_even) / abs(self.tuning_rate_odd)

    def edges(self, c_v: float) -> tuple[float, float]:
        return resonant_frequencies(self.params, c_v)

    def center(self, c_v: float) -> float:
        lo, hi = self.edges(c_v)
        return 0.5 * (lo + hi)


def _place_odd_mode(c_v1, c_v2, f1, f2, f_ref):
    """Y_o and theta_o_ref putting the odd resonance at f1 (for c_v1) and f2 (for c_v2)."""

    def mismatch(a):
        return f1 * c_v1 * math.tan(a * f1 / f_ref) - f2 * c_v2 * math.tan(a * f2 / f_ref)

    a_max = 0.5 * math.pi * f_ref / max(f1, f2) * (1 - 1e-9)
    grid = np.linspace(1e-4, a_max, 4001)
    vals = np.array([mismatch(a) for a in grid])
    idx = np.flatnonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))
    if idx.size == 0:
        ratio = (f1 * c_v1) / (f2 * c_v2)
        raise InfeasibleDesignError(
            "odd mode cannot span the band with this capacitance range "
            f"(need C ratio {c_v2 / c_v1:.3f} to exceed {f1 / f2:.3f}**2-ish; w*C ratio {ratio:.3f})"
        )
    a = brentq(mismatch, grid[idx[0]], grid[idx[0] + 1], xtol=1e-15)
    y_o = 2 * math.pi * f1 * c_v1 * math.tan(a * f1 / f_ref)
    return y_o, a


def _loading_admittance_for(b_need, t_e, b_l):
    """Positive Y_e giving load susceptance b_need; roots of t Y^2 + (b_l - b) Y + b b_l t = 0."""
    if b_l is None:
        return [b_need / t_e] if b_need / t_e > 0 else []
    a, b, c = t_e, b_l - b_need, b_need * b_l * t_e
    disc = b * b - 4 * a * c
    if disc < 0:
        return []
    r = math.sqrt(disc)
    return sorted(y for y in ((-b + r) / (2 * a), (-b - r) / (2 * a)) if y > 0)


def align_tuning_rates(
    c_v1: float,
    c_v2: float,
    band: tuple[float, float] = (CBRS_LOW_HZ, CBRS_HIGH_HZ),
    bandwidth: float = 20e6,
    l1: float = DEFAULT_L1,
    f_ref: float = F_REF_HZ,
    tolerance: float = 0.01,
) -> FilterDesign:
    """Dimension the resonator so one bias sweep moves both band edges together.

    ``c_v1 < c_v2``; the smaller capacitance puts the pass-band center at
    ``band[1]`` and the larger at ``band[0]``. The odd mode fixes ``(Y_o,
    theta_o)``; the even mode is pinned to the upper edge at ``c_v1`` by solving
    for ``Y_e`` and ``theta_e`` is chosen to equalize the two tuning rates.
    """
    if not 0 < c_v1 < c_v2:
        raise ValueError("need 0 < c_v1 < c_v2")
    lo, hi = band
    half = bandwidth / 2
    fo1, fo2 = hi - half, lo - half
    fe1, fe2 = hi + half, lo + half
    y_o, theta_o = _place_odd_mode(c_v1, c_v2, fo1, fo2, f_ref)
    odd_rate = (fo2 - fo1) / (c_v2 - c_v1)

    w1 = 2 * math.pi * fe1 * c_v1
    t1 = math.tan(theta_o * fe1 / f_ref)
    b_need = -y_o * (w1 + y_o * t1) / (y_o - w1 * t1)
    b_l = -1.0 / (2 * math.pi * fe1 * l1) if l1 > 0 else None

    def candidate(theta_e):
        t_e = math.tan(theta_e * fe1 / f_ref)
        out = []
        for y_e in _loading_admittance_for(b_need, t_e, b_l):
            p = ResonatorParams(y_o, y_e, theta_o, theta_e, f_ref, l1)
            try:
                f_hi = _root_near(p, c_v1, fe1)
                f_lo = _root_near(p, c_v2, fe2)
            except (NoResonanceError, PoleError):
                continue
            rate = (f_lo - f_hi) / (c_v2 - c_v1)
            out.append((abs(rate - odd_rate) / abs(odd_rate), p, rate))
        return min(out, key=lambda x: x[0]) if out else None

    theta_max = math.pi * f_ref / fe1 * (1 - 1e-6)
    grid = np.linspace(theta_max * 1e-3, theta_max, 300)
    scored = [(c[0], th) for th in grid if (c := candidate(th)) is not None]
    if not scored:
        raise InfeasibleDesignError("no loading element places the even mode at the upper edge")
    _, th0 = min(scored)
    step = grid[1] - grid[0]

    def objective(th):
        c = candidate(th)
        return math.inf if c is None else c[0]

    res = minimize_scalar(
        objective,
        bounds=(max(grid[0], th0 - step), min(theta_max, th0 + step)),
        method="bounded",
        options={"xatol": 1e-10},
    )
    best = candidate(res.x) or candidate(th0)
    if best is None:
        raise InfeasibleDesignError("even-mode search failed to converge")
    mismatch, params, even_rate = best
    if mismatch > tolerance:
        raise InfeasibleDesignError(
            f"best achievable tuning-rate mismatch is {100 * mismatch:.2f}% "
            f"(limit {100 * tolerance:.2f}%); even mode spans "
            f"{abs(even_rate) * (c_v2 - c_v1) / 1e6:.1f} MHz vs {abs(fo1 - fo2) / 1e6:.1f} MHz"
        )
    return FilterDesign(params, c_v1, c_v2, (lo, hi), bandwidth, odd_rate, even_rate)


def _root_near(params: ResonatorParams, c_v: float, f0: float, span: float = 100e6) -> float:
    fun = lambda f: even_mode_admittance(params, c_v, f)  # noqa: E731
    grid = np.linspace(f0 - span, f0 + span, 801)
    vals = _grid_values(fun, grid)
    best = None
    for i in np.flatnonzero(np.sign(vals[:-1]) != np.sign(vals[1:])):
        if not (np.isfinite(vals[i]) and np.isfinite(vals[i + 1])):
            continue
        r = brentq(fun, grid[i], grid[i + 1], xtol=1e-6)
        if abs(fun(r)) < ROOT_RESIDUAL_S and (best is None or abs(r - f0) < abs(best - f0)):
            best = r
    if best is None:
        raise NoResonanceError("no even-mode root near target")
    return best


@dataclass(frozen=True)
class TunableFilter:
    """A solved design plus the varactor law that drives it."""

    design: FilterDesign
    law: VaractorLaw
    bias_lo: float
    bias_hi: float

    @classmethod
    def solve(
        cls,
        law: VaractorLaw = VaractorLaw(),
        bias_lo: float = 3.0,
        bias_hi: float = 4.5,
        band: tuple[float, float] = (CBRS_LOW_HZ, CBRS_HIGH_HZ),
        bandwidth: float = 20e6,
        l1: float = DEFAULT_L1,
    ) -> "TunableFilter":
        c_hi_bias = law.capacitance(bias_hi)
        c_lo_bias = law.capacitance(bias_lo)
        design = align_tuning_rates(c_hi_bias, c_lo_bias, band, bandwidth, l1=l1)
        return cls(design, law, bias_lo, bias_hi)

    def edges_at_bias(self, bias: float) -> tuple[float, float]:
        return self.design.edges(self.law.capacitance(bias))

    def center_at_bias(self, bias: float) -> float:
        lo, hi = self.edges_at_bias(bias)
        return 0.5 * (lo + hi)

    def bias_for_center(self, center: float) -> float:
        g = lambda v: self.center_at_bias(v) - center  # noqa: E731
        lo, hi = self.bias_lo, self.bias_hi
        if g(lo) > 1e3 or g(hi) < -1e3:
            raise ValueError(f"center {center / 1e6:.1f} MHz outside the tuning range")
        if abs(g(lo)) <= 1e3:
            return lo
        if abs(g(hi)) <= 1e3:
            return hi
        return float(brentq(g, lo, hi, xtol=1e-9))

    def sweep(self, n: int = 16) -> list[tuple[float, float, float, float, float]]:
        """(bias, C_v, f_odd, f_even, center) rows across the bias range."""
        rows = []
        for v in np.linspace(self.bias_lo, self.bias_hi, n):
            c = self.law.capacitance(v)
            f_odd, f_even = self.design.edges(c)
            rows.append((float(v), float(c), f_odd, f_even, 0.5 * (f_odd + f_even)))
        return rows


@dataclass(frozen=True)
class FilterResponse:
    center: float  # Hz
    insertion_loss: float = MEASURED_INSERTION_LOSS_DB  # dB, <= 0
    rolloff: float = ROLLOFF_DB_PER_20MHZ  # dB per 20 MHz

    def __post_init__(self):
        if self.insertion_loss > 0:
            raise ValueError("insertion_loss is a gain in dB and must be <= 0")
        if self.rolloff < 0:
            raise ValueError("rolloff must be >= 0")

    @property
    def loss_magnitude(self) -> float:
        """Insertion loss as a positive number, the convention of ElementGainChain."""
        return -self.insertion_loss

    def retuned(self, center: float) -> "FilterResponse":
        return replace(self, center=center)


def response_at(resp: FilterResponse, f) -> float | np.ndarray:
    """Transmission in dB: flat inside +-10 MHz, then linear roll-off capped at 40 dB."""
    dist = np.abs(np.asarray(f, dtype=float) - resp.center)
    extra = resp.rolloff * np.maximum(dist - PASSBAND_HALF_WIDTH_HZ, 0.0) / 20e6
    out = resp.insertion_loss - np.minimum(extra, MAX_REJECTION_DB)
    return float(out) if out.ndim == 0 else out


def out_of_band_rejection(resp: FilterResponse, f) -> float | np.ndarray:
    """Attenuation beyond the in-band level (0 in band, <= 0 outside)."""
    return response_at(resp, f) - resp.insertion_loss
