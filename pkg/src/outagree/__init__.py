"""Output agreement in networks of incrementally passive systems."""

from .graph import NetworkGraph, build_incidence, comm_laplacian, moore_penrose, weighted_laplacian
from .exosystem import Exosystem, GeneralBlock, LinearSkewBlock, StaticBlock, rotation_block
from .nodes import DroopNode, GradientFlowNode, InventoryNode, LinearNode
from .simulation import ClosedLoopSystem, Trace, assemble, integrate
from .scenario_io import Scenario, ScenarioError, parse_scenario

__all__ = [
    "NetworkGraph",
    "build_incidence",
    "comm_laplacian",
    "moore_penrose",
    "weighted_laplacian",
    "Exosystem",
    "GeneralBlock",
    "LinearSkewBlock",
    "StaticBlock",
    "rotation_block",
    "DroopNode",
    "GradientFlowNode",
    "InventoryNode",
    "LinearNode",
    "ClosedLoopSystem",
    "Trace",
    "assemble",
    "integrate",
    "Scenario",
    "ScenarioError",
    "parse_scenario",
]
