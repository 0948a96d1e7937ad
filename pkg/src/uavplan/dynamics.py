"""Local plan repair when a sensor node is added or fails, without replanning the whole mission."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import physics
from .geometry import point_to_polyline
from .planner import (
    InfeasibleScenarioError,
    MissionSolution,
    PlannerOptions,
    assemble,
    check_feasibility,
    path_bits,
)
from .routing import ClusterPlan
from .scenario import Scenario, SensorNode
from .sca import ClusterSpec, InfeasibleClusterError, iterate_from_trajectories, make_cluster, optimize_cluster

KEPT = "kept"
INSERTED = "inserted"
REMOVED = "removed"
NEW_SINGLETON = "new_singleton_cluster"


# --------------------------------------------------------------------------- events

@dataclass(frozen=True)
class DynamicEvent:
    kind: str  # "add" or "fail"
    node: SensorNode | None = None
    node_id: int | None = None

    def __post_init__(self):
        if self.kind == "add":
            if self.node is None:
                raise ValueError("add event needs a node")
            if not (self.node.demand_bits > 0 and self.node.coverage_radius > 0):
                raise ValueError(f"node {self.node.id}: demand and coverage radius must be positive")
        elif self.kind == "fail":
            if self.node_id is None:
                raise ValueError("fail event needs a node id")
        else:
            raise ValueError(f"unknown event kind {self.kind!r}")

    @classmethod
    def add(cls, node: SensorNode) -> "DynamicEvent":
        return cls("add", node=node)

    @classmethod
    def fail(cls, node_id: int) -> "DynamicEvent":
        return cls("fail", node_id=int(node_id))

    def to_dict(self) -> dict:
        if self.kind == "add":
            n = self.node
            return {
                "kind": "add",
                "id": n.id,
                "x_m": n.position[0],
                "y_m": n.position[1],
                "demand_bits": n.demand_bits,
                "coverage_radius_m": n.coverage_radius,
            }
        return {"kind": "fail", "id": self.node_id}

    @classmethod
    def from_dict(cls, d: dict) -> "DynamicEvent":
        kind = d.get("kind")
        if kind == "add":
            node = SensorNode(
                int(d["id"]),
                (float(d["x_m"]), float(d["y_m"])),
                float(d["demand_bits"]),
                float(d["coverage_radius_m"]),
            )
            return cls.add(node)
        if kind == "fail":
            return cls.fail(int(d["id"]))
        raise ValueError(f"unknown event kind {kind!r}")


@dataclass
class AdjustedSolution:
    solution: MissionSolution
    scenario: Scenario  # the scenario after the event
    action: str
    cluster: int | None = None  # flight index touched by the action
    position: int | None = None  # insertion index within that flight's order
    gap_bound: float | None = None
    distance_to_path: float | None = None  # m, new node to the original flight paths
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "action": self.action,
            "cluster": self.cluster,
            "position": self.position,
            "gap_bound": self.gap_bound,
            "distance_to_path_m": self.distance_to_path,
            "completion_time_s": self.solution.completion_time,
            "n_flights": self.solution.n_flights,
            "notes": list(self.notes),
        }


# --------------------------------------------------------------------------- closed forms

def pass_through_data(d0: float, node: SensorNode, scenario: Scenario, literal: bool = False) -> float:
    """Bits collected flying a straight chord at V_f whose closest approach to the node is d0.

    ``literal=True`` evaluates the variant with halved arctan arguments, kept only
    for comparison; it does not match the integral.
    """
    d_th = node.coverage_radius
    if d0 < 0 or d0 > d_th:
        raise ValueError(f"offset {d0} outside [0, {d_th}]")
    c2 = d_th * d_th - d0 * d0
    if c2 <= 0.0:
        return 0.0
    c = math.sqrt(c2)
    H2 = scenario.uav.altitude ** 2
    g0 = scenario.channel.gamma0
    B = scenario.channel.bandwidth
    vf = scenario.uav.v_fly
    a = math.sqrt(H2 + d0 * d0 + g0)
    b = math.sqrt(H2 + d0 * d0)
    k = 2.0 if literal else 1.0
    val = (
        c * math.log((H2 + d_th * d_th + g0) / (H2 + d_th * d_th))
        + 2.0 * a * math.atan(c / (k * a))
        - 2.0 * b * math.atan(c / (k * b))
    )
    return 2.0 * B / (vf * math.log(2.0)) * val


def insertion_gap_bound(total_time: float, L: float, demand: float, scenario: Scenario) -> float:
    """(2L/V_f + Q/R_h) / T."""
    if not total_time > 0:
        raise ValueError("total_time must be > 0")
    if L < 0:
        raise ValueError("L must be >= 0")
    return (2.0 * L / scenario.uav.v_fly + demand / physics.hover_rate(scenario)) / total_time


def distance_to_paths(solution: MissionSolution, point, scenario: Scenario) -> tuple[float, int | None]:
    """Closest horizontal distance from a point to any flight path, and that flight's index."""
    best, idx = math.inf, None
    s = scenario.platform.xy
    for n, ct in enumerate(solution.clusters):
        d, _ = point_to_polyline(point, ct.path(s))
        if d < best:
            best, idx = d, n
    return best, idx


# --------------------------------------------------------------------------- helpers

def _copy_solution(sol: MissionSolution, orders, clusters, passthrough, algorithm=None) -> MissionSolution:
    return assemble(
        ClusterPlan([list(o) for o in orders]),
        clusters,
        trace=list(sol.trace),
        algorithm=algorithm or sol.algorithm,
        passthrough=passthrough,
    )


def _broken_passthrough(sol: MissionSolution, scenario: Scenario, flights) -> list[int]:
    out = []
    for nid, info in sol.passthrough.items():
        n = info["cluster"]
        if n not in flights:
            continue
        node = scenario.node(nid)
        if path_bits(sol.clusters[n], node.xy, node.coverage_radius, scenario) < node.demand_bits * (1 - 1e-3):
            out.append(nid)
    return out


def _rehome(adj: AdjustedSolution, broken: list[int], opts) -> AdjustedSolution:
    """Schedule passthrough nodes whose carrying flight moved away or was removed."""
    sol = adj.solution
    for nid in broken:
        node = adj.scenario.node(nid)
        pt = {k: v for k, v in sol.passthrough.items() if k != nid}
        bare = _copy_solution(sol, sol.plan.orders, sol.clusters, pt)
        base = adj.scenario.with_nodes([n for n in adj.scenario.nodes if n.id != nid])
        sol = adjust_for_addition(bare, node, base, opts).solution
        adj.notes.append(f"node {nid} no longer served in passing; rescheduled")
    adj.solution = sol
    return adj


def _collecting(ct, scenario: Scenario):
    """The flight with its transit-only pieces removed, re-evaluated."""
    if not any(tr.transit for tr in ct.trajectories):
        return ct
    keep = [tr for tr in ct.trajectories if not tr.transit]
    return make_cluster([tr.node_id for tr in keep], keep, scenario)


def _local_mask(order, free_ids) -> np.ndarray:
    return np.array([nid not in free_ids for nid in order], bool)


# --------------------------------------------------------------------------- addition

def adjust_for_addition(
    solution: MissionSolution, node: SensorNode, scenario: Scenario, opts: PlannerOptions | None = None
) -> AdjustedSolution:
    """Serve a new node with the least disturbance to the existing plan.

    Kept if some flight already passes close enough to collect its demand at
    cruise speed; otherwise inserted at the cheapest feasible gap between two
    consecutive stops of one flight (that flight's trajectory is re-optimised
    around the gap); otherwise given its own flight.
    """
    opts = opts or PlannerOptions()
    if node.id in scenario.node_ids:
        raise ValueError(f"node id {node.id} already in use")
    new_sc = scenario.with_nodes(list(scenario.nodes) + [node])
    report = check_feasibility(scenario.with_nodes([node]))
    if not report.feasible:
        raise InfeasibleScenarioError(report)
    s = scenario.platform.xy
    w = node.xy
    T = solution.completion_time
    L, carrier = distance_to_paths(solution, w, scenario)

    # kept: an existing flight passes through the coverage disc with enough data
    if L <= node.coverage_radius:
        q_tilde = pass_through_data(L, node, scenario)
        if q_tilde >= node.demand_bits:
            bits = path_bits(solution.clusters[carrier], w, node.coverage_radius, scenario)
            if bits >= node.demand_bits * (1 - 1e-3):
                pt = dict(solution.passthrough)
                pt[node.id] = {"cluster": carrier, "offset": L, "bits": q_tilde}
                out = MissionSolution(
                    plan=solution.plan,
                    clusters=solution.clusters,
                    totals=solution.totals,
                    trace=solution.trace,
                    algorithm=solution.algorithm,
                    passthrough=pt,
                )
                return AdjustedSolution(out, new_sc, KEPT, cluster=carrier, distance_to_path=L)

    # inserted: candidate gaps ranked by detour length
    p_f = physics.propulsion_power(scenario.uav.v_fly, scenario.uav)
    extra_com = node.demand_bits / physics.hover_rate(scenario) * physics.hover_power(scenario.uav)
    cands = []
    views = [_collecting(ct, scenario) for ct in solution.clusters]
    for n, ct in enumerate(views):
        headroom = scenario.uav.battery_joules - ct.breakdown.e_total
        stops = [s] + [tr.exit for tr in ct.trajectories]
        nexts = [tr.entry for tr in ct.trajectories] + [s]
        for pos, (a, b) in enumerate(zip(stops, nexts)):
            detour = float(np.linalg.norm(a - w) + np.linalg.norm(w - b) - np.linalg.norm(a - b))
            need = detour / scenario.uav.v_fly * p_f + extra_com
            if need <= headroom:
                cands.append((detour, n, pos))
    cands.sort()
    notes = []
    for detour, n, pos in cands:
        ct = views[n]
        order = list(ct.order)
        new_order = order[:pos] + [node.id] + order[pos:]
        free = {node.id}
        if pos > 0:
            free.add(order[pos - 1])
        if pos < len(order):
            free.add(order[pos])
        warm = {tr.node_id: tr for tr in ct.trajectories}
        try:
            new_ct = optimize_cluster(
                new_order, new_sc, opts.sca, warm=warm, frozen=_local_mask(new_order, free)
            )
        except InfeasibleClusterError as exc:
            notes.append(f"flight {n} gap {pos}: {exc}")
            continue
        orders = [list(o) for o in solution.plan.orders]
        orders[n] = new_order
        clusters = list(solution.clusters)
        clusters[n] = new_ct
        out = _copy_solution(solution, orders, clusters, solution.passthrough)
        adj = AdjustedSolution(
            out,
            new_sc,
            INSERTED,
            cluster=n,
            position=pos,
            gap_bound=insertion_gap_bound(T, L, node.demand_bits, scenario),
            distance_to_path=L,
            notes=notes,
        )
        broken = _broken_passthrough(out, new_sc, {n})
        return _rehome(adj, broken, opts) if broken else adj

    # new flight
    try:
        single = optimize_cluster([node.id], new_sc, opts.sca)
    except InfeasibleClusterError as exc:
        raise InfeasibleScenarioError(report) from exc
    orders = [list(o) for o in solution.plan.orders] + [[node.id]]
    out = _copy_solution(solution, orders, list(solution.clusters) + [single], solution.passthrough)
    return AdjustedSolution(
        out, new_sc, NEW_SINGLETON, cluster=len(orders) - 1, position=0, distance_to_path=L, notes=notes
    )


# --------------------------------------------------------------------------- failure

def adjust_for_failure(
    solution: MissionSolution, node_id: int, scenario: Scenario, opts: PlannerOptions | None = None
) -> AdjustedSolution:
    """Drop a node from its flight and smooth the trajectory around the gap.

    The shortened flight is re-optimised from the old waypoints with only the two
    neighbours of the gap free and the energy capped at the old flight's. Because
    cruise legs are flown at V_f while in-coverage pieces may be faster, cutting
    the corner can take longer; the old path is then kept and flown as transit
    over the failed node. Either way the completion time cannot grow.
    """
    opts = opts or PlannerOptions()
    if node_id not in scenario.node_ids:
        raise KeyError(f"unknown node id {node_id}")
    new_sc = scenario.with_nodes([n for n in scenario.nodes if n.id != node_id])
    if node_id in solution.passthrough:
        pt = {k: v for k, v in solution.passthrough.items() if k != node_id}
        out = _copy_solution(solution, solution.plan.orders, solution.clusters, pt)
        return AdjustedSolution(out, new_sc, REMOVED, cluster=solution.passthrough[node_id]["cluster"])
    n = next(i for i, o in enumerate(solution.plan.orders) if node_id in o)
    orders = [list(o) for o in solution.plan.orders]
    clusters = list(solution.clusters)
    old = solution.clusters[n]
    live = [tr for tr in old.trajectories if not tr.transit]
    if len(live) == 1:
        del orders[n]
        del clusters[n]
        pt = {}
        orphans = []
        for k, info in solution.passthrough.items():
            if info["cluster"] == n:
                orphans.append(k)
                continue
            info = dict(info)
            if info["cluster"] > n:
                info["cluster"] -= 1
            pt[k] = info
        out = _copy_solution(solution, orders, clusters, pt)
        adj = AdjustedSolution(out, new_sc, REMOVED, cluster=n)
        # nodes the removed flight collected in passing need a new placement
        return _rehome(adj, orphans, opts) if orphans else adj
    pos = [tr.node_id for tr in live].index(node_id)
    keep = [tr.copy() for tr in live if tr.node_id != node_id]
    new_order = [tr.node_id for tr in keep]
    free = set()
    if pos > 0:
        free.add(live[pos - 1].node_id)
    if pos + 1 < len(live):
        free.add(live[pos + 1].node_id)
    spec = ClusterSpec.from_scenario(new_order, new_sc)
    init = iterate_from_trajectories(keep, spec, new_sc)
    try:
        new_ct = optimize_cluster(
            new_order,
            new_sc,
            opts.sca,
            energy_cap=old.breakdown.e_total,
            frozen=_local_mask(new_order, free),
            init=init,
        )
    except InfeasibleClusterError:
        new_ct = make_cluster(new_order, keep, new_sc)
    bd = new_ct.breakdown
    if bd.t_total > old.breakdown.t_total or bd.e_total > scenario.uav.battery_joules:
        # cutting the corner is slower than the old path (legs are flown at V_f):
        # keep flying the old path and just stop collecting there
        trs = [tr.copy() for tr in old.trajectories]
        for tr in trs:
            if tr.node_id == node_id:
                tr.transit = True
        new_order = [tr.node_id for tr in trs]
        new_ct = make_cluster(new_order, trs, new_sc)
    orders[n] = new_order
    clusters[n] = new_ct
    out = _copy_solution(solution, orders, clusters, solution.passthrough)
    adj = AdjustedSolution(out, new_sc, REMOVED, cluster=n)
    broken = _broken_passthrough(out, new_sc, {n})
    return _rehome(adj, broken, opts) if broken else adj


def apply_event(solution: MissionSolution, event: DynamicEvent, scenario: Scenario, opts=None) -> AdjustedSolution:
    if event.kind == "add":
        return adjust_for_addition(solution, event.node, scenario, opts)
    return adjust_for_failure(solution, event.node_id, scenario, opts)


def apply_events(solution: MissionSolution, events, scenario: Scenario, opts=None) -> list[AdjustedSolution]:
    """Apply events in order; each result feeds the next."""
    out = []
    for ev in events:
        adj = apply_event(solution, ev, scenario, opts)
        out.append(adj)
        solution, scenario = adj.solution, adj.scenario
    return out
