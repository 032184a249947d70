"""Quasi-static time-series simulator for mini-PV impact on LV radial grids."""

from .engine import RunResult, RunSummary, compare_modes, run, sweep
from .grid_model import GridTopology, backbone_buses, load_topology, partition_zones, validate_radial
from .power_flow import BranchFlowSolution, NodalInjection, solve
from .scenario import ConfigError, ScenarioConfig, load_config, penetration_alpha, place_mpv

__version__ = "0.1.0"

__all__ = [
    "BranchFlowSolution",
    "ConfigError",
    "GridTopology",
    "NodalInjection",
    "RunResult",
    "RunSummary",
    "ScenarioConfig",
    "backbone_buses",
    "compare_modes",
    "load_config",
    "load_topology",
    "partition_zones",
    "penetration_alpha",
    "place_mpv",
    "run",
    "solve",
    "sweep",
    "validate_radial",
]
