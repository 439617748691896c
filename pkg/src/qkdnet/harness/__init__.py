"""Simulation driver: topology loading, scenario replay, control
endpoint and command-line interface."""

from .topology import Network, LinkRuntime, load_topology, load_preset
from .scenario import Scenario, ScenarioEvent, load_scenario
from .sim import Simulation, SimResult, run_scenario, METRICS_COLUMNS

__all__ = [
    "Network", "LinkRuntime", "load_topology", "load_preset",
    "Scenario", "ScenarioEvent", "load_scenario",
    "Simulation", "SimResult", "run_scenario", "METRICS_COLUMNS",
]
