"""Mission planning: feasibility screening, the alternating trajectory/routing loop, verification."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import physics
from .geometry import asymmetric_distance_matrix
from .physics import TimeEnergyBreakdown, total_breakdown
from .routing import ClusterPlan, GaParams, RouteBudget, bisection_clusters, penalized_cost
from .scenario import Scenario, SensorNode
from .sca import ClusterTrajectory, InfeasibleClusterError, ScaOptions, make_cluster, optimize_cluster

log = logging.getLogger(__name__)


class InfeasibleScenarioError(RuntimeError):
    def __init__(self, report: "FeasibilityReport"):
        self.report = report
        super().__init__(
            f"scenario infeasible: node {report.limiting_node} short by {-report.margins[report.limiting_node]:.6g} J"
        )


class PlanningError(RuntimeError):
    """A sub-solver failed; ``last_solution`` holds the best verified solution so far."""

    def __init__(self, message, last_solution=None):
        super().__init__(message)
        self.last_solution = last_solution


@dataclass
class FeasibilityReport:
    feasible: bool
    margins: dict[int, float]  # J of battery left over on a dedicated round trip
    limiting_node: int | None
    mode: str = "exact"

    def to_dict(self) -> dict:
        return {
            "feasible": self.feasible,
            "mode": self.mode,
            "limiting_node": self.limiting_node,
            "margins_J": {str(k): v for k, v in self.margins.items()},
        }


@dataclass
class MissionSolution:
    plan: ClusterPlan
    clusters: list[ClusterTrajectory]
    totals: TimeEnergyBreakdown
    trace: list[dict] = field(default_factory=list)
    algorithm: str = "pto"
    # nodes served while passing by: node id -> {"cluster": n, "offset": m, "bits": Q}
    passthrough: dict = field(default_factory=dict)

    @property
    def completion_time(self) -> float:
        return self.totals.t_total

    @property
    def n_flights(self) -> int:
        return self.plan.n_flights

    def trajectories(self) -> dict:
        """Collecting trajectories by node id (transit-only pieces excluded)."""
        return {tr.node_id: tr for ct in self.clusters for tr in ct.trajectories if not tr.transit}


@dataclass
class PlannerOptions:
    sca: ScaOptions = field(default_factory=ScaOptions)
    ga: GaParams = field(default_factory=GaParams)
    max_rounds: int = 10
    rel_tol: float = 1e-3
    n_lb: int | None = None  # override the computed charging lower bound


def assemble(plan: ClusterPlan, clusters, trace=None, algorithm="pto", passthrough=None) -> MissionSolution:
    return MissionSolution(
        plan=plan,
        clusters=list(clusters),
        totals=total_breakdown(c.breakdown for c in clusters),
        trace=list(trace or []),
        algorithm=algorithm,
        passthrough=dict(passthrough or {}),
    )


# --------------------------------------------------------------------------- feasibility

_ECOM_CACHE: dict = {}


def min_collection_energy(scenario: Scenario, demand: float, radius: float, opts: ScaOptions | None = None) -> float:
    """Least in-coverage energy that delivers ``demand`` inside a disc of ``radius``.

    Depends only on the demand, the disc and the UAV/channel constants, so it is
    cached on those.
    """
    key = (scenario.uav, scenario.channel, scenario.disc, float(demand), float(radius))
    if key not in _ECOM_CACHE:
        probe = scenario.replace(nodes=(SensorNode(0, (0.0, 0.0), float(demand), float(radius)),))
        o = opts or ScaOptions()
        o = ScaOptions(min(o.eps_outer, 1e-4), o.max_iters, o.tol, o.monotone_tol, objective="energy")
        ct = optimize_cluster([0], probe, o, legs=False)
        _ECOM_CACHE[key] = ct.breakdown.e_com
    return _ECOM_CACHE[key]


def check_feasibility(scenario: Scenario, mode: str = "exact") -> FeasibilityReport:
    """Can every node be served by a dedicated round trip on one battery?

    exact: distance to the coverage boundary and the minimum in-coverage energy;
    approximate: distance to the node and hover collection at the centre.
    """
    if mode not in ("exact", "approximate"):
        raise ValueError("mode must be 'exact' or 'approximate'")
    uav = scenario.uav
    _, e_ad = physics.vertical_transit(uav, scenario.platform)
    per_metre = 2.0 * physics.cruise_energy_per_metre(uav)
    s = scenario.platform.xy
    margins = {}
    for n in scenario.nodes:
        dist = float(np.linalg.norm(n.xy - s))
        if mode == "approximate":
            e_com = n.demand_bits / physics.hover_rate(scenario) * physics.hover_power(uav)
        else:
            dist = max(0.0, dist - n.coverage_radius)
            try:
                e_com = min_collection_energy(scenario, n.demand_bits, n.coverage_radius)
            except InfeasibleClusterError:
                e_com = math.inf
        margins[n.id] = uav.battery_joules - e_ad - e_com - per_metre * dist
    limiting = min(margins, key=lambda k: margins[k]) if margins else None
    feasible = all(m >= 0.0 for m in margins.values())
    return FeasibilityReport(feasible, margins, limiting, mode)


# --------------------------------------------------------------------------- PTO

def _routing_inputs(scenario: Scenario, trajs: dict):
    ids = scenario.node_ids
    entries = [trajs[i].entry for i in ids]
    exits = [trajs[i].exit for i in ids]
    D = asymmetric_distance_matrix(entries, exits, scenario.platform.position)
    ecom = [physics.collection_energy(trajs[i].q, trajs[i].t, scenario.uav) for i in ids]
    return D, RouteBudget.from_scenario(scenario, ids, ecom)


def _solve_clusters(plan: ClusterPlan, scenario, opts: PlannerOptions, warm: dict, reuse: dict):
    out = []
    for order in plan.orders:
        key = tuple(order)
        if key in reuse:
            out.append(reuse[key])
            continue
        out.append(optimize_cluster(order, scenario, opts.sca, warm=warm))
    return out


def _fewer_flights(cand, D, budget, n_lb, scenario, opts, warm, reuse):
    """Try the best plans with fewer flights than the routing budgets allow.

    The budgets use the current (time-optimised) collection energies, which
    overstate what a flight needs once its trajectories are re-optimised under
    the battery cap. A plan with N-1 flights is kept when every flight solves
    within the battery and the completion time drops; repeated down to n_lb.
    """
    from .routing import solve_advrp_ga

    log_ = []
    while cand.n_flights > n_lb:
        n = cand.n_flights - 1
        plan, _ = solve_advrp_ga(n, D, budget, opts.ga, seeds=[cand.plan.giant_tour()])
        try:
            clusters = _solve_clusters(plan, scenario, opts, warm, reuse)
        except InfeasibleClusterError:
            log_.append({"n_flights": n, "feasible": False})
            break
        fewer = assemble(plan, clusters)
        log_.append({"n_flights": n, "feasible": True, "completion_time": fewer.completion_time})
        if fewer.completion_time >= cand.completion_time:
            break
        cand = fewer
    return cand, log_


def pto(scenario: Scenario, opts: PlannerOptions | None = None, check: bool = True) -> MissionSolution:
    """Alternate per-flight trajectory optimisation with clustering/routing until the completion time settles."""
    from .bounds import charging_lower_bound

    opts = opts or PlannerOptions()
    if check:
        report = check_feasibility(scenario)
        if not report.feasible:
            raise InfeasibleScenarioError(report)
    trace: list[dict] = []
    plan = ClusterPlan([[nid] for nid in scenario.node_ids])
    try:
        clusters = _solve_clusters(plan, scenario, opts, {}, {})
    except InfeasibleClusterError as exc:
        raise PlanningError(f"single-node flight infeasible: {exc}") from exc
    best = assemble(plan, clusters)
    trace.append({"round": 0, "n_flights": plan.n_flights, "completion_time": best.completion_time, "accepted": True})
    n_lb = opts.n_lb if opts.n_lb is not None else charging_lower_bound(scenario, opts.sca)
    for rnd in range(1, opts.max_rounds + 1):
        trajs = best.trajectories()
        D, budget = _routing_inputs(scenario, trajs)
        steps: list = []
        new_plan = bisection_clusters(D, budget, n_lb, opts.ga, seeds=[best.plan.giant_tour()], trace=steps)
        rec = {
            "round": rnd,
            "n_flights": new_plan.n_flights,
            "routing_cost": penalized_cost(new_plan, D, budget),
            "bisection": [(s.n_flights, s.cost, s.feasible) for s in steps],
        }
        reuse = {tuple(c.order): c for c in best.clusters}
        try:
            clusters = _solve_clusters(new_plan, scenario, opts, trajs, reuse)
        except InfeasibleClusterError as exc:
            rec.update(accepted=False, reason=str(exc), completion_time=None)
            trace.append(rec)
            log.info("round %d rejected: %s", rnd, exc)
            break
        cand = assemble(new_plan, clusters)
        cand, rec["repair"] = _fewer_flights(cand, D, budget, n_lb, scenario, opts, trajs, reuse)
        rec["n_flights"] = cand.n_flights
        rec["completion_time"] = cand.completion_time
        prev = best.completion_time
        accepted = cand.completion_time < prev
        rec["accepted"] = accepted
        trace.append(rec)
        if accepted:
            best = cand
        rel = abs(prev - cand.completion_time) / prev
        if not accepted or rel < opts.rel_tol:
            break
    best.trace = trace
    best.algorithm = "pto"
    return best


# --------------------------------------------------------------------------- verification

@dataclass
class VerificationReport:
    families: dict[str, bool]
    failures: list[str]
    breakdown: TimeEnergyBreakdown
    per_cluster: list[TimeEnergyBreakdown]
    delivered_bits: dict[int, float]

    @property
    def ok(self) -> bool:
        return all(self.families.values())

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "families": dict(self.families),
            "failures": list(self.failures),
            "totals": self.breakdown.as_dict(),
        }


def path_bits(ct: ClusterTrajectory, node_xy, radius: float, scenario: Scenario, samples_per_metre: float = 2.0) -> float:
    """Bits a node would deliver to the UAV along a whole flight (cruise legs at V_f included).

    Numerical: each straight piece is sampled and the rate is integrated over the
    time spent inside the node's coverage disc.
    """
    uav = scenario.uav
    s = scenario.platform.xy
    pieces = []  # (start, end, duration)
    pts = [s]
    for tr in ct.trajectories:
        pieces.append((pts[-1], tr.q[0], None))
        for m in range(len(tr.t)):
            pieces.append((tr.q[m], tr.q[m + 1], float(tr.t[m])))
        pts.append(tr.q[-1])
    pieces.append((pts[-1], s, None))
    w = np.asarray(node_xy, float)
    total = 0.0
    for a, b, dur in pieces:
        a = np.asarray(a, float)
        b = np.asarray(b, float)
        length = float(np.linalg.norm(b - a))
        if dur is None:
            dur = length / uav.v_fly
        if dur <= 0:
            continue
        n = max(8, int(math.ceil(length * samples_per_metre)))
        # midpoint rule over the piece
        u = (np.arange(n) + 0.5) / n
        p = a[None, :] + u[:, None] * (b - a)[None, :]
        d = np.linalg.norm(p - w, axis=1)
        r = np.where(d <= radius, physics.link_rate(d, scenario.channel, uav), 0.0)
        total += float(np.sum(r)) * dur / n
    return total


def verify_solution(solution: MissionSolution, scenario: Scenario, bits_tol: float = 1e-3) -> VerificationReport:
    """Re-check every mission constraint from the raw waypoints and slots."""
    uav = scenario.uav
    fam = {
        k: True
        for k in (
            "slots_positive",
            "throughput",
            "coverage",
            "segment",
            "speed_change",
            "entry_exit_speed",
            "energy",
            "partition",
            "passthrough",
            "totals",
        )
    }
    fails: list[str] = []

    def fail(family, msg):
        fam[family] = False
        fails.append(f"{family}: {msg}")

    transit = {tr.node_id for ct in solution.clusters for tr in ct.trajectories if tr.transit}
    orders = [[i for i in order if i not in transit] for order in solution.plan.orders]
    served = [n for order in orders for n in order]
    problems = ClusterPlan([o for o in orders if o]).problems(
        [i for i in scenario.node_ids if i not in solution.passthrough]
    )
    for p in problems:
        fail("partition", p)
    for ct, order in zip(solution.clusters, solution.plan.orders):
        if list(ct.order) != list(order) or [tr.node_id for tr in ct.trajectories] != list(order):
            fail("partition", f"cluster trajectory order {ct.order} does not match plan {order}")
    if len(solution.clusters) != solution.plan.n_flights:
        fail("partition", "number of cluster trajectories differs from number of flights")

    per_cluster = []
    bits: dict[int, float] = {}
    sp_tol = 1e-5  # m/s
    for n, ct in enumerate(solution.clusters):
        for tr in ct.trajectories:
            nid = tr.node_id
            q = np.asarray(tr.q, float)
            t = np.asarray(tr.t, float)
            if np.any(t <= 0):
                fail("slots_positive", f"node {nid}: non-positive slot")
                continue
            if not tr.transit:
                node = scenario.node(nid)
                b = physics.delivered_bits(q, t, node.xy, scenario)
                bits[nid] = b
                if b < node.demand_bits * (1.0 - bits_tol):
                    fail("throughput", f"node {nid}: {b:.6g} < {node.demand_bits:.6g} bits")
                off = np.linalg.norm(q - node.xy, axis=1)
                if np.max(off) > node.coverage_radius * (1 + 1e-6) + 1e-6:
                    fail("coverage", f"node {nid}: waypoint {np.max(off):.6g} m from centre")
            if tr.hover:
                continue
            z = physics.segment_lengths(q)
            lim = np.minimum(scenario.disc.max_segment_len, uav.v_max * t)
            if np.any(z > lim * (1 + 1e-6) + 1e-9):
                fail("segment", f"node {nid}: segment length above limit")
            v = z / t
            if len(v) > 1 and np.max(np.abs(np.diff(v))) > uav.a_max + sp_tol:
                fail("speed_change", f"node {nid}: speed jump {np.max(np.abs(np.diff(v))):.6g} m/s")
            for end in (v[0], v[-1]):
                if abs(end - uav.v_fly) > uav.a_max + sp_tol:
                    fail("entry_exit_speed", f"node {nid}: boundary speed {end:.6g} m/s")
        bd = physics.cluster_breakdown(ct, scenario)
        per_cluster.append(bd)
        if bd.e_total > uav.battery_joules * (1 + 1e-9):
            fail("energy", f"flight {n}: {bd.e_total:.6g} J > {uav.battery_joules:.6g} J")
    for nid, info in solution.passthrough.items():
        node = scenario.node(nid)
        n = info["cluster"]
        if nid in served:
            fail("passthrough", f"node {nid} is both served in passing and scheduled")
        if not 0 <= n < len(solution.clusters):
            fail("passthrough", f"node {nid}: unknown carrying flight {n}")
            continue
        b = path_bits(solution.clusters[n], node.xy, node.coverage_radius, scenario)
        bits[nid] = b
        if b < node.demand_bits * (1.0 - bits_tol):
            fail("passthrough", f"node {nid}: only {b:.6g} bits collected in passing")
    total = total_breakdown(per_cluster)
    for k, v in total.as_dict().items():
        ref = getattr(solution.totals, k)
        if abs(v - ref) > 1e-9 * max(1.0, abs(v)):
            fail("totals", f"{k}: recomputed {v:.12g} vs stored {ref:.12g}")
    return VerificationReport(fam, fails, total, per_cluster, bits)
