"""Greedy element-path selection across several eNBs."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class Assignment:
    """Owner eNB per element path (None = unassigned)."""

    owners: tuple[Optional[str], ...]

    def paths_of(self, enb_id: str) -> list[int]:
        return [p for p, o in enumerate(self.owners) if o == enb_id]

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for o in self.owners:
            if o is not None:
                out[o] = out.get(o, 0) + 1
        return out

    def enbs(self) -> list[str]:
        return sorted(self.counts())

    def swapped(self, pairs: Sequence[tuple[int, int]]) -> "Assignment":
        owners = list(self.owners)
        for a, b in pairs:
            owners[a], owners[b] = owners[b], owners[a]
        return Assignment(tuple(owners))


def balanced_assignment(n_paths: int, enb_ids: Sequence[str], rng: np.random.Generator) -> Assignment:
    """Spread paths over eNBs evenly (counts within one) in random order."""
    if not enb_ids:
        return Assignment((None,) * n_paths)
    labels = [enb_ids[i % len(enb_ids)] for i in range(n_paths)]
    order = rng.permutation(n_paths)
    owners: list[Optional[str]] = [None] * n_paths
    for slot, p in enumerate(order):
        owners[p] = labels[slot]
    return Assignment(tuple(owners))


def swap_size(n_paths: int, frac: float = 0.05) -> int:
    return max(1, math.ceil(frac * n_paths))


def random_swaps(assign: Assignment, s: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """s disjoint pairs of paths owned by different eNBs."""
    free = set(p for p, o in enumerate(assign.owners) if o is not None)
    pairs = []
    for _ in range(s):
        cands = [(a, b) for a in sorted(free) for b in sorted(free)
                 if a < b and assign.owners[a] != assign.owners[b]]
        if not cands:
            break
        a, b = cands[rng.integers(len(cands))]
        pairs.append((a, b))
        free -= {a, b}
    return pairs


class ElementSelector:
    """Keep-if-better search over balanced assignments.

    Cycle: :meth:`propose` a trial, let beamforming re-converge, then
    :meth:`report` its summed metric. Trials that lose are remembered so they
    are not retried from the same incumbent; when every swap of the current
    size has been tried the swap size grows.
    """

    def __init__(self, n_paths: int, enb_ids: Sequence[str], rng: np.random.Generator, swap_frac: float = 0.05):
        self.n_paths = n_paths
        self.rng = rng
        self.swap_frac = swap_frac
        self.rounds = 0
        self.reinitialize(enb_ids)

    def reinitialize(self, enb_ids: Sequence[str]) -> Assignment:
        self.enb_ids = list(enb_ids)
        self.current = balanced_assignment(self.n_paths, self.enb_ids, self.rng)
        self.current_score: Optional[float] = None
        self.trial: Optional[Assignment] = None
        self._rejected: set[tuple[Optional[str], ...]] = set()
        self._s = swap_size(self.n_paths, self.swap_frac)
        return self.current

    @property
    def active(self) -> bool:
        return len(self.enb_ids) >= 2

    def score_current(self, score: float) -> None:
        self.current_score = score

    def propose(self) -> Assignment:
        if not self.active:
            return self.current
        for _ in range(4):
            for _ in range(64):
                cand = self.current.swapped(random_swaps(self.current, self._s, self.rng))
                if cand.owners not in self._rejected and cand != self.current:
                    self.trial = cand
                    return cand
            self._s = min(self._s + 1, self.n_paths // 2)
        self.trial = self.current.swapped(random_swaps(self.current, self._s, self.rng))
        return self.trial

    def report(self, score: float) -> bool:
        """Keep the trial if it beats the incumbent; returns whether it was kept."""
        self.rounds += 1
        trial, self.trial = self.trial, None
        if trial is None:
            raise RuntimeError("report() without a pending trial")
        if self.current_score is None or score > self.current_score:
            self.current, self.current_score = trial, score
            self._rejected.clear()
            self._s = swap_size(self.n_paths, self.swap_frac)
            return True
        self._rejected.add(trial.owners)
        return False


def element_selection_round(
    assign: Assignment,
    converged_m: Mapping[str, float],
    evaluate,
    rng: np.random.Generator,
    swap_frac: float = 0.05,
) -> Assignment:
    """One swap trial: score ``assign`` by its converged per-eNB metrics, swap s
    cross-eNB pairs, score the trial with ``evaluate(trial) -> per-eNB metrics``,
    and keep whichever sum is larger."""
    if len(assign.enbs()) < 2:
        return assign
    s = swap_size(len(assign.owners), swap_frac)
    trial = assign.swapped(random_swaps(assign, s, rng))
    before = sum(converged_m.values())
    after = sum(evaluate(trial).values())
    return trial if after > before else assign
