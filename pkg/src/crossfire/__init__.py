"""Crossfire link-flooding attack vs. rerouting defense, as a discrete-time simulation."""

from .engine import MetricsTrace, SimConfig, load_scenario, read_scenario, run, step
from .netmodel import (
    RoutingState,
    Topology,
    build_initial_routing,
    link_loads,
    load_topology,
    reroute_destination,
    shortest_path,
)

__all__ = [
    "MetricsTrace",
    "RoutingState",
    "SimConfig",
    "Topology",
    "build_initial_routing",
    "link_loads",
    "load_scenario",
    "load_topology",
    "read_scenario",
    "reroute_destination",
    "run",
    "shortest_path",
    "step",
]

__version__ = "0.1.0"
