"""Simulation and control of an active, frequency-selective smart surface for CBRS TDD cells."""

from .core import CbrsChannel, ElementGainChain, PhaseVector, Position, link_budget, surface_gain
from .experiment import ExperimentSpec, RunSummary, run
from .scenario import Scenario, ScenarioError, load_scenario, parse_scenario
from .sim import World, cell_search, effective_snr, throughput

__all__ = [
    "CbrsChannel", "ElementGainChain", "PhaseVector", "Position", "link_budget", "surface_gain",
    "ExperimentSpec", "RunSummary", "run", "Scenario", "ScenarioError", "load_scenario",
    "parse_scenario", "World", "cell_search", "effective_snr", "throughput",
]
