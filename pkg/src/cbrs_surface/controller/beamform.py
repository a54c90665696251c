"""Blind beamforming: greedy random-perturbation search over quantized phases."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from ..core import PhaseVector


@dataclass(frozen=True)
class BeamformConfig:
    n_nf: int = 8
    epsilon: float = 0.18
    perturb_prob: float = 0.25
    plateau: int = 50

    def __post_init__(self):
        if self.n_nf < 1:
            raise ValueError("n_nf must be >= 1")
        if not 0 < self.perturb_prob <= 1:
            raise ValueError("perturb_prob must lie in (0, 1]")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")


@dataclass(frozen=True)
class BeamformState:
    theta: PhaseVector
    best_theta: PhaseVector
    m_max: float = -math.inf
    negative_streak: int = 0
    iteration: int = 0

    @classmethod
    def initial(cls, theta: PhaseVector) -> "BeamformState":
        return cls(theta=theta, best_theta=theta)


def perturbation(k: int, rng: np.random.Generator, p: float = 0.25) -> np.ndarray:
    """Each entry moves one level (+1 or -1) with probability p; never all zero."""
    while True:
        move = rng.random(k) < p
        if move.any():
            signs = np.where(rng.random(k) < 0.5, -1, 1)
            return np.where(move, signs, 0)


def beamform_step(
    state: BeamformState, observed_m: float, rng: np.random.Generator, p: float = 0.25
) -> BeamformState:
    """Score the vector just measured, keep it if strictly better, propose the next."""
    if observed_m > state.m_max:
        best, m_max, streak = state.theta, observed_m, 0
    else:
        best, m_max, streak = state.best_theta, state.m_max, state.negative_streak + 1
    theta = best.shifted(perturbation(len(best), rng, p))
    return BeamformState(theta, best, m_max, streak, state.iteration + 1)


def detect_channel_change(state: BeamformState, m_new: float, epsilon: float) -> bool:
    """True when the re-measured best vector falls clearly below the record."""
    return m_new < state.m_max - epsilon


class Beamformer:
    """Drives one search: call :meth:`observe` with the metric measured under
    :attr:`theta`, then apply the new :attr:`theta`.

    After ``n_nf`` consecutive non-improvements the best vector is re-applied
    and re-measured to test for a channel change.
    """

    def __init__(self, k: int, config: BeamformConfig, rng: np.random.Generator,
                 initial: Optional[PhaseVector] = None):
        if k < 1:
            raise ValueError("beamformer needs at least one path")
        self.config = config
        self.rng = rng
        self.state = BeamformState.initial(initial if initial is not None else PhaseVector.zeros(k))
        self.rechecking = False
        self.evaluations = 0
        self.changes = 0
        self.stale = 0  # iterations without a significant record gain
        self._level = -math.inf
        self.plateau_at: Optional[int] = None

    @property
    def theta(self) -> PhaseVector:
        return self.state.theta

    @property
    def best_theta(self) -> PhaseVector:
        return self.state.best_theta

    @property
    def m_max(self) -> float:
        return self.state.m_max

    @property
    def plateaued(self) -> bool:
        return self.stale >= self.config.plateau

    @property
    def converged(self) -> bool:
        """Plateau reached at least once since the last reset."""
        return self.plateau_at is not None

    def observe(self, m: float) -> str:
        """Returns one of accept, reject, recheck, steady, changed."""
        self.evaluations += 1
        cfg = self.config
        if self.rechecking:
            self.rechecking = False
            s = self.state
            if detect_channel_change(s, m, cfg.epsilon):
                self.changes += 1
                # restart from the current vector, scored in the new environment
                self.state = BeamformState(s.best_theta, s.best_theta, m, 0, s.iteration + 1)
                self._level = m
                self.stale = 0
                self._propose()
                return "changed"
            self.state = replace(s, negative_streak=0, m_max=max(s.m_max, m), iteration=s.iteration + 1)
            self._tick()
            self._propose()
            return "steady"
        before = self.state.m_max
        self.state = beamform_step(self.state, m, self.rng, cfg.perturb_prob)
        accepted = self.state.m_max > before
        self._tick()
        if self.state.negative_streak >= cfg.n_nf:
            self.state = replace(self.state, theta=self.state.best_theta)
            self.rechecking = True
            return "recheck"
        return "accept" if accepted else "reject"

    def _tick(self) -> None:
        if self.state.m_max > self._level + self.config.epsilon or self._level == -math.inf:
            self._level = self.state.m_max
            self.stale = 0
        else:
            self.stale += 1
        if self.plateau_at is None and self.plateaued:
            self.plateau_at = self.state.iteration

    def _propose(self) -> None:
        s = self.state
        step = perturbation(len(s.best_theta), self.rng, self.config.perturb_prob)
        self.state = replace(s, theta=s.best_theta.shifted(step))

    def reset(self, keep_theta: bool = True) -> None:
        """Forget the record (environment changed externally)."""
        best = self.state.best_theta
        self.state = BeamformState.initial(best if keep_theta else PhaseVector.zeros(len(best)))
        self.rechecking = False
        self.stale = 0
        self._level = -math.inf
        self.plateau_at = None
