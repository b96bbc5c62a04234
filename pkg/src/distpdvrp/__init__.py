"""Distributed pickup-and-delivery routing by primal decomposition of a fleet MILP."""

from .instance import (PdvrpInstance, Request, Vehicle, generate_mixed_fleet_instance, generate_random_instance,
                       two_robot_instance)
from .primal_decomp import AgentConfig
from .network import build_comm_graph, run_distributed

__all__ = ["PdvrpInstance", "Request", "Vehicle", "generate_mixed_fleet_instance", "generate_random_instance",
           "two_robot_instance", "AgentConfig", "build_comm_graph", "run_distributed"]
