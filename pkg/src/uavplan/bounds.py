"""Lower bounds: minimum number of charges and a 1-tree bound on the completion time."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import physics
from .geometry import asymmetric_distance_matrix, symmetric_distance_matrix
from .routing import tsp_tour
from .scenario import Scenario
from .sca import ClusterTrajectory, ScaOptions, optimize_cluster

_ONE_FLIGHT_CACHE: dict = {}


# --------------------------------------------------------------------------- charges

def charges_needed(one_flight_energy: float, battery: float) -> int:
    return max(1, int(math.ceil(one_flight_energy / battery - 1e-12)))


def one_flight_energy(scenario: Scenario, opts: ScaOptions | None = None) -> ClusterTrajectory:
    """Minimum-energy single flight through every node (tour order by nearest neighbour + 2-opt)."""
    key = (scenario, opts)
    if key not in _ONE_FLIGHT_CACHE:
        D = symmetric_distance_matrix(scenario.positions(), scenario.platform.position)
        order = [scenario.nodes[i - 1].id for i in tsp_tour(D)]
        o = opts or ScaOptions()
        o = ScaOptions(o.eps_outer, o.max_iters, o.tol, o.monotone_tol, objective="energy")
        _ONE_FLIGHT_CACHE[key] = optimize_cluster(order, scenario, o)
    return _ONE_FLIGHT_CACHE[key]


def charging_lower_bound(scenario: Scenario, opts: ScaOptions | None = None) -> int:
    """Smallest flight count the one-flight minimum energy allows: ceil(E* / E_UAV)."""
    e_star = one_flight_energy(scenario, opts).breakdown.e_total
    return charges_needed(e_star, scenario.uav.battery_joules)


# --------------------------------------------------------------------------- 1-tree

def atsp_symmetric_transform(dist: np.ndarray, n_flights: int, pair_cost: float = 0.0) -> np.ndarray:
    """Depot-expanded asymmetric matrix turned into a symmetric one by node doubling.

    The K+1 matrix gets n_flights-1 extra platform copies (index K+1...), reached
    from node i at d[i, 0] and leaving to node j at d[0, j]; every other pair involving
    a copy and any platform-to-platform pair is infinite. With n = K + n_flights logical
    nodes the result is the 2n x 2n matrix [[Inf, D'^T], [D', Inf]] whose entries
    (i, n + i) carry ``pair_cost`` (the edge tying a node to its twin).
    """
    if n_flights < 1:
        raise ValueError("n_flights must be >= 1")
    d = np.asarray(dist, float)
    K = d.shape[0] - 1
    n = K + n_flights
    Dp = np.full((n, n), np.inf)
    Dp[: K + 1, : K + 1] = d
    np.fill_diagonal(Dp, np.inf)
    if n_flights > 1:
        copies = np.arange(K + 1, n)
        Dp[1 : K + 1, K + 1 :] = d[1:, 0][:, None]
        Dp[K + 1 :, 1 : K + 1] = d[0, 1:][None, :]
        Dp[np.ix_(copies, copies)] = np.inf
    S = np.full((2 * n, 2 * n), np.inf)
    S[:n, n:] = Dp.T
    S[n:, :n] = Dp
    idx = np.arange(n)
    S[idx, n + idx] = pair_cost
    S[n + idx, idx] = pair_cost
    return S


def _one_tree(w: np.ndarray) -> tuple[float, np.ndarray]:
    """Minimum 1-tree: spanning tree on nodes 1..n-1 plus the two cheapest edges at node 0.

    Returns (length, degree vector). Raises ValueError when no finite 1-tree exists.
    """
    n = w.shape[0]
    deg = np.zeros(n, int)
    total = 0.0
    if n > 2:
        in_tree = np.zeros(n, bool)
        in_tree[0] = True  # excluded from the spanning tree
        in_tree[1] = True
        best = w[1].copy()
        parent = np.ones(n, int)
        for _ in range(n - 2):
            cand = np.where(in_tree, np.inf, best)
            j = int(np.argmin(cand))
            if not np.isfinite(cand[j]):
                raise ValueError("graph without node 0 is disconnected; no tour exists")
            total += cand[j]
            deg[j] += 1
            deg[parent[j]] += 1
            in_tree[j] = True
            upd = w[j] < best
            best = np.where(upd, w[j], best)
            parent = np.where(upd, j, parent)
    row = w[0, 1:]
    two = np.argsort(row, kind="stable")[:2]
    if len(two) < 2 or not np.all(np.isfinite(row[two])):
        raise ValueError("node 0 has fewer than two finite edges; no tour exists")
    total += float(row[two].sum())
    deg[0] = 2
    deg[two + 1] += 1
    return total, deg


def one_tree_bound(sym: np.ndarray, iterations: int = 300) -> float:
    """Held-Karp lower bound on the shortest Hamiltonian cycle of a symmetric matrix.

    Subgradient ascent on node potentials; the step is scaled by the spread of the
    finite edge weights, so adding a constant to every edge shifts the bound by
    exactly n times that constant.
    """
    w = np.asarray(sym, float)
    n = w.shape[0]
    if n < 3:
        raise ValueError("need at least three nodes")
    if not np.allclose(np.where(np.isfinite(w), w, 0), np.where(np.isfinite(w.T), w.T, 0)):
        raise ValueError("matrix is not symmetric")
    finite = w[np.isfinite(w) & ~np.eye(n, dtype=bool)]
    spread = float(np.percentile(finite, 75) - np.percentile(finite, 25)) if finite.size else 0.0
    if spread <= 0:
        spread = float(np.ptp(finite)) if finite.size else 0.0
    step0 = spread / n if spread > 0 else 1.0
    pi = np.zeros(n)
    best = -np.inf
    step = step0
    since = 0
    for _ in range(iterations):
        wp = w + pi[:, None] + pi[None, :]
        length, deg = _one_tree(wp)
        bound = length - 2.0 * pi.sum()
        if not np.isfinite(best) or bound > best + 1e-12 * max(1.0, abs(best)):
            best = bound
            since = 0
        else:
            since += 1
            if since >= 10:
                step *= 0.5
                since = 0
        g = deg - 2
        if not np.any(g):
            break  # the 1-tree is a tour: bound is exact
        pi = pi + step * g
        if step < 1e-9 * step0:
            break
    return float(best)


# --------------------------------------------------------------------------- completion bound

@dataclass
class CompletionBound:
    value: float
    n_lb: int
    route_bound: float  # metres
    collection_time: float  # s, in-coverage time plus its recharge
    constant_time: float  # s, n_lb takeoff/landing constants


def completion_lower_bound(scenario: Scenario, solution=None, opts=None) -> CompletionBound:
    """1-tree based bound on the completion time, built on the entry/exit points of a PTO solution.

    Collection time and energy per node come from that solution's in-coverage
    trajectories; the inter-node cruise is bounded below by the 1-tree of the
    depot-expanded symmetric matrix with N_lb flights.
    """
    if solution is None:
        from .planner import pto

        solution = pto(scenario, opts)
    n_lb = charging_lower_bound(scenario)
    trajs = {tr.node_id: tr for ct in solution.clusters for tr in ct.trajectories}
    ids = scenario.node_ids
    entries = [trajs[i].entry for i in ids]
    exits = [trajs[i].exit for i in ids]
    D = asymmetric_distance_matrix(entries, exits, scenario.platform.position)
    n_lb_eff = min(n_lb, len(ids))
    route = one_tree_bound(atsp_symmetric_transform(D, n_lb_eff))
    pc = scenario.platform.charge_power
    coll = 0.0
    for i in ids:
        tr = trajs[i]
        coll += float(np.sum(tr.t)) + physics.collection_energy(tr.q, tr.t, scenario.uav) / pc
    const = n_lb_eff * physics.takeoff_landing_constant(scenario)
    value = coll + physics.leg_time_coefficient(scenario) * route + const
    return CompletionBound(value, n_lb, route, coll, const)
