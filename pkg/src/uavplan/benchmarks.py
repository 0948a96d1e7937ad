"""Hover-mode baselines: greedy battery-driven splitting of one tour, and optimised clustering."""
from __future__ import annotations

import numpy as np

from . import physics
from .bounds import charges_needed
from .geometry import symmetric_distance_matrix
from .planner import FeasibilityReport, InfeasibleScenarioError, MissionSolution, assemble
from .routing import ClusterPlan, GaParams, RouteBudget, bisection_clusters, route_length, tsp_tour
from .scenario import Scenario
from .sca import InCoverageTrajectory, make_cluster


def hover_time(scenario: Scenario, node) -> float:
    return node.demand_bits / physics.hover_rate(scenario)


def hover_trajectory(scenario: Scenario, node) -> InCoverageTrajectory:
    """A single zero-length slot above the node centre."""
    c = node.xy
    return InCoverageTrajectory(node.id, np.vstack([c, c]), np.array([hover_time(scenario, node)]), hover=True)


def _hover_cluster(order, scenario):
    return make_cluster(order, [hover_trajectory(scenario, scenario.node(i)) for i in order], scenario)


def _infeasible(scenario, node_id, shortfall):
    margins = {n.id: 0.0 for n in scenario.nodes}
    margins[node_id] = -shortfall
    return InfeasibleScenarioError(FeasibilityReport(False, margins, node_id, "hover"))


def greedy_plan(scenario: Scenario) -> MissionSolution:
    """Walk one short tour, hovering at each node, and go home to recharge only when forced to."""
    uav = scenario.uav
    s = scenario.platform.xy
    D = symmetric_distance_matrix(scenario.positions(), s)
    tour = [scenario.nodes[i - 1] for i in tsp_tour(D)]
    per_m = physics.cruise_energy_per_metre(uav)
    p_h = physics.hover_power(uav)
    _, e_ad = physics.vertical_transit(uav, scenario.platform)
    full = uav.battery_joules - e_ad  # vertical transit reserved once per flight
    flights: list[list[int]] = []
    current: list[int] = []
    e_res = full
    pos = s
    k = 0
    while k < len(tour):
        node = tour[k]
        e_k = per_m * float(np.linalg.norm(node.xy - pos)) + p_h * hover_time(scenario, node)
        e_ret = per_m * float(np.linalg.norm(node.xy - s))
        if e_res >= e_k + e_ret:
            current.append(node.id)
            e_res -= e_k
            pos = node.xy
            k += 1
            continue
        if not current:
            raise _infeasible(scenario, node.id, e_k + e_ret - e_res)
        flights.append(current)
        current, e_res, pos = [], full, s
    if current:
        flights.append(current)
    plan = ClusterPlan(flights)
    return assemble(plan, [_hover_cluster(o, scenario) for o in plan.orders], algorithm="greedy")


def hover_budget(scenario: Scenario) -> RouteBudget:
    p_h = physics.hover_power(scenario.uav)
    ecom = [p_h * hover_time(scenario, n) for n in scenario.nodes]
    return RouteBudget.from_scenario(scenario, scenario.node_ids, ecom)


def hover_one_flight_bound(scenario: Scenario) -> int:
    """Charges needed if one hover flight along the heuristic tour served every node."""
    D = symmetric_distance_matrix(scenario.positions(), scenario.platform.position)
    budget = hover_budget(scenario)
    _, e_ad = physics.vertical_transit(scenario.uav, scenario.platform)
    e1 = e_ad + float(np.sum(budget.collection_energy)) + budget.energy_per_metre * route_length(D, tsp_tour(D))
    return charges_needed(e1, scenario.uav.battery_joules)


def hmode_plan(scenario: Scenario, ga: GaParams | None = None) -> MissionSolution:
    """Hover at node centres; clusters and orders from the penalised routing bisection."""
    uav = scenario.uav
    s = scenario.platform.xy
    budget = hover_budget(scenario)
    for n, e in zip(scenario.nodes, budget.collection_energy):
        need = e + 2.0 * budget.energy_per_metre * float(np.linalg.norm(n.xy - s))
        if need > budget.energy_avail:
            raise _infeasible(scenario, n.id, need - budget.energy_avail)
    D = symmetric_distance_matrix(scenario.positions(), s)
    seed_tour = [scenario.nodes[i - 1].id for i in tsp_tour(D)]
    plan = bisection_clusters(D, budget, hover_one_flight_bound(scenario), ga, seeds=[seed_tour])
    return assemble(plan, [_hover_cluster(o, scenario) for o in plan.orders], algorithm="hmode")
