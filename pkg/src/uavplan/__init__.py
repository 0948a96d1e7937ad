"""Periodic data-collection planning for a rechargeable rotary-wing UAV."""
from .benchmarks import greedy_plan, hmode_plan
from .bounds import charging_lower_bound, completion_lower_bound
from .dynamics import DynamicEvent, adjust_for_addition, adjust_for_failure, insertion_gap_bound, pass_through_data
from .planner import MissionSolution, PlannerOptions, check_feasibility, pto, verify_solution
from .routing import ClusterPlan, GaParams, bisection_clusters
from .scenario import Scenario, SensorNode, generate_random, load_scenario, default_scenario
from .sca import ScaOptions, optimize_cluster

__all__ = [
    "ClusterPlan",
    "DynamicEvent",
    "GaParams",
    "MissionSolution",
    "PlannerOptions",
    "ScaOptions",
    "Scenario",
    "SensorNode",
    "adjust_for_addition",
    "adjust_for_failure",
    "bisection_clusters",
    "charging_lower_bound",
    "check_feasibility",
    "completion_lower_bound",
    "generate_random",
    "greedy_plan",
    "hmode_plan",
    "insertion_gap_bound",
    "load_scenario",
    "optimize_cluster",
    "pass_through_data",
    "pto",
    "default_scenario",
    "verify_solution",
]
