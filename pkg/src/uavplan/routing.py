"""Clustering and visiting order: penalised distance-constrained routing by GA plus bisection over N.

Index 0 of every distance matrix is the charging platform; indices 1..K are the
nodes in ``RouteBudget.node_ids`` order. ``dist[i, j]`` is the cruise distance
from the exit point of i to the entry point of j.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from . import physics
from .scenario import Scenario

PENALTY = 1.0e11


@dataclass
class ClusterPlan:
    """A partition of the nodes into flights, each with a visiting order (node ids)."""

    orders: list[list[int]]

    @property
    def n_flights(self) -> int:
        return len(self.orders)

    @property
    def assignment(self) -> dict[int, int]:
        return {nid: n for n, order in enumerate(self.orders) for nid in order}

    def giant_tour(self) -> list[int]:
        return [nid for order in self.orders for nid in order]

    def problems(self, node_ids) -> list[str]:
        out = []
        seen: dict[int, int] = {}
        for n, order in enumerate(self.orders):
            if not order:
                out.append(f"flight {n} is empty")
            for nid in order:
                if nid in seen:
                    out.append(f"node {nid} appears in flights {seen[nid]} and {n}")
                seen[nid] = n
        missing = set(node_ids) - set(seen)
        extra = set(seen) - set(node_ids)
        if missing:
            out.append(f"nodes not served: {sorted(missing)}")
        if extra:
            out.append(f"unknown nodes in plan: {sorted(extra)}")
        return out

    def to_dict(self) -> dict:
        return {"n_flights": self.n_flights, "orders": [list(map(int, o)) for o in self.orders]}

    @classmethod
    def from_dict(cls, data: dict) -> "ClusterPlan":
        return cls([[int(i) for i in o] for o in data["orders"]])


@dataclass(frozen=True)
class GaParams:
    population: int = 100
    generations: int = 500
    crossover_rate: float = 0.9
    mutation_rate: float = 0.2
    tournament: int = 4
    seed: int = 0
    # stop early after this many generations without improvement (0 disables)
    stall_generations: int = 150
    # share of offspring improved by relocate/reversal local search
    local_search_rate: float = 0.05

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must be >= 2")
        if not all(0.0 <= r <= 1.0 for r in (self.crossover_rate, self.mutation_rate, self.local_search_rate)):
            raise ValueError("rates must lie in [0, 1]")
        if self.tournament < 1 or self.generations < 0:
            raise ValueError("tournament >= 1 and generations >= 0 required")


@dataclass
class RouteBudget:
    """Per-flight distance budgets derived from the battery and per-node collection energy.

    budget(route) = (energy_avail - sum of collection energies on the route) / energy_per_metre
    """

    node_ids: list[int]
    collection_energy: np.ndarray  # (K,) J, node_ids order
    energy_avail: float  # battery minus vertical transit energy, J
    energy_per_metre: float  # cruise J/m
    time_per_metre: float  # completion-time coefficient, s/m
    penalty: float = PENALTY
    # constant completion-time terms not affected by routing (reported only)
    extras: dict = field(default_factory=dict)

    @classmethod
    def from_scenario(cls, scenario: Scenario, node_ids, collection_energy) -> "RouteBudget":
        uav = scenario.uav
        _, e_ad = physics.vertical_transit(uav, scenario.platform)
        return cls(
            node_ids=list(node_ids),
            collection_energy=np.asarray(collection_energy, float),
            energy_avail=uav.battery_joules - e_ad,
            energy_per_metre=physics.cruise_energy_per_metre(uav),
            time_per_metre=physics.leg_time_coefficient(scenario),
        )

    def route_budget(self, idx) -> float:
        """Distance budget (m) of a route visiting the given 1-based matrix indices."""
        e = float(np.sum(self.collection_energy[np.asarray(idx, int) - 1])) if len(idx) else 0.0
        return (self.energy_avail - e) / self.energy_per_metre

    def index_of(self) -> dict[int, int]:
        return {nid: i + 1 for i, nid in enumerate(self.node_ids)}


def route_length(dist: np.ndarray, idx) -> float:
    """Loop length platform -> idx[0] -> ... -> idx[-1] -> platform."""
    if len(idx) == 0:
        return 0.0
    path = [0] + list(idx) + [0]
    return float(sum(dist[a, b] for a, b in zip(path[:-1], path[1:])))


def penalized_cost(plan: ClusterPlan, dist: np.ndarray, budget: RouteBudget) -> float:
    """Completion-time coefficient times total loop length plus quadratic budget penalty."""
    pos = budget.index_of()
    total = 0.0
    pen = 0.0
    for order in plan.orders:
        idx = [pos[nid] for nid in order]
        D = route_length(dist, idx)
        total += D
        excess = max(0.0, D - budget.route_budget(idx))
        pen += excess * excess
    return budget.time_per_metre * total + budget.penalty * pen


def budget_excess(plan: ClusterPlan, dist: np.ndarray, budget: RouteBudget) -> list[float]:
    pos = budget.index_of()
    out = []
    for order in plan.orders:
        idx = [pos[nid] for nid in order]
        out.append(route_length(dist, idx) - budget.route_budget(idx))
    return out


# --------------------------------------------------------------------------- numba kernels

@numba.njit(cache=True)
def _split(perm, n_routes, dist, ecom, coef, pen, e_avail, epm, cuts):
    """Optimal cut of a giant tour into exactly n_routes non-empty loops; fills cuts, returns cost."""
    K = perm.shape[0]
    seg = np.full((K + 1, K + 1), np.inf)
    for a in range(K):
        d_in = dist[0, perm[a]]
        e = 0.0
        inner = 0.0
        for b in range(a + 1, K + 1):
            node = perm[b - 1]
            if b - 1 > a:
                inner += dist[perm[b - 2], node]
            e += ecom[node - 1]
            D = d_in + inner + dist[node, 0]
            over = D - (e_avail - e) / epm
            c = coef * D
            if over > 0.0:
                c += pen * over * over
            seg[a, b] = c
    f = np.full((n_routes + 1, K + 1), np.inf)
    arg = np.zeros((n_routes + 1, K + 1), np.int64)
    f[0, 0] = 0.0
    for j in range(1, n_routes + 1):
        for b in range(j, K - (n_routes - j) + 1):
            best = np.inf
            ba = -1
            for a in range(j - 1, b):
                v = f[j - 1, a] + seg[a, b]
                if v < best:
                    best = v
                    ba = a
            f[j, b] = best
            arg[j, b] = ba
    b = K
    for j in range(n_routes, 0, -1):
        cuts[j] = b
        b = arg[j, b]
    cuts[0] = 0
    return f[n_routes, K]


@numba.njit(cache=True)
def _ox(p1, p2, i, j, child):
    K = p1.shape[0]
    used = np.zeros(K + 1, np.bool_)
    for k in range(i, j + 1):
        child[k] = p1[k]
        used[p1[k]] = True
    pos = (j + 1) % K
    for k in range(K):
        g = p2[(j + 1 + k) % K]
        if not used[g]:
            child[pos] = g
            used[g] = True
            pos = (pos + 1) % K


@numba.njit(cache=True)
def _local_search(perm, fit, n_routes, dist, ecom, coef, pen, e_avail, epm, cuts):
    """First-improvement relocate and segment reversal on the giant tour, scored by the split cost."""
    K = perm.shape[0]
    cand = perm.copy()
    improved = True
    while improved:
        improved = False
        for i in range(K):
            for j in range(K):
                if i == j:
                    continue
                g = perm[i]
                if i < j:
                    cand[:i] = perm[:i]
                    cand[i:j] = perm[i + 1 : j + 1]
                    cand[j] = g
                    cand[j + 1 :] = perm[j + 1 :]
                else:
                    cand[:j] = perm[:j]
                    cand[j] = g
                    cand[j + 1 : i + 1] = perm[j:i]
                    cand[i + 1 :] = perm[i + 1 :]
                c = _split(cand, n_routes, dist, ecom, coef, pen, e_avail, epm, cuts)
                if c < fit - 1e-12 * abs(fit):
                    perm[:] = cand
                    fit = c
                    improved = True
        for i in range(K - 1):
            for j in range(i + 1, K):
                cand[:] = perm
                cand[i : j + 1] = perm[i : j + 1][::-1]
                c = _split(cand, n_routes, dist, ecom, coef, pen, e_avail, epm, cuts)
                if c < fit - 1e-12 * abs(fit):
                    perm[:] = cand
                    fit = c
                    improved = True
    return fit


@numba.njit(cache=True)
def _ga(init_pop, n_routes, dist, ecom, coef, pen, e_avail, epm, generations, cx_rate, mut_rate, tsize, stall, ls_rate, seed):
    np.random.seed(seed)
    P, K = init_pop.shape
    pop = init_pop.copy()
    fit = np.empty(P)
    cuts = np.zeros(n_routes + 1, np.int64)
    for p in range(P):
        fit[p] = _split(pop[p], n_routes, dist, ecom, coef, pen, e_avail, epm, cuts)
        # the seeded tour is always polished; random starts only at the offspring rate
        if ls_rate > 0.0 and (p == 0 or np.random.random() < ls_rate):
            fit[p] = _local_search(pop[p], fit[p], n_routes, dist, ecom, coef, pen, e_avail, epm, cuts)
    best = np.argmin(fit)
    best_perm = pop[best].copy()
    best_fit = fit[best]
    since = 0
    new = np.empty_like(pop)
    new_fit = np.empty(P)
    for gen in range(generations):
        order = np.argsort(fit)
        # elitism: carry the two best unchanged
        n_elite = 2 if P >= 4 else 1
        for e in range(n_elite):
            new[e] = pop[order[e]]
            new_fit[e] = fit[order[e]]
        for c in range(n_elite, P):
            # tournament selection of two parents
            pa = np.random.randint(P)
            for _ in range(tsize - 1):
                r = np.random.randint(P)
                if fit[r] < fit[pa]:
                    pa = r
            pb = np.random.randint(P)
            for _ in range(tsize - 1):
                r = np.random.randint(P)
                if fit[r] < fit[pb]:
                    pb = r
            child = new[c]
            if K > 1 and np.random.random() < cx_rate:
                i = np.random.randint(K)
                j = np.random.randint(K)
                if i > j:
                    i, j = j, i
                _ox(pop[pa], pop[pb], i, j, child)
            else:
                child[:] = pop[pa]
            if K > 1 and np.random.random() < mut_rate:
                i = np.random.randint(K)
                j = np.random.randint(K)
                t = child[i]
                child[i] = child[j]
                child[j] = t
            if K > 1 and np.random.random() < mut_rate:
                i = np.random.randint(K)
                j = np.random.randint(K)
                if i > j:
                    i, j = j, i
                child[i : j + 1] = child[i : j + 1][::-1].copy()
            new_fit[c] = _split(child, n_routes, dist, ecom, coef, pen, e_avail, epm, cuts)
            if np.random.random() < ls_rate:
                new_fit[c] = _local_search(child, new_fit[c], n_routes, dist, ecom, coef, pen, e_avail, epm, cuts)
        pop, new = new, pop
        fit, new_fit = new_fit, fit
        b = np.argmin(fit)
        if fit[b] < best_fit - 1e-12 * abs(best_fit):
            best_fit = fit[b]
            best_perm = pop[b].copy()
            since = 0
        else:
            since += 1
            if stall > 0 and since >= stall:
                break
    best_fit = _split(best_perm, n_routes, dist, ecom, coef, pen, e_avail, epm, cuts)
    return best_perm, cuts, best_fit


# --------------------------------------------------------------------------- tours

def nearest_neighbor_tour(dist: np.ndarray) -> list[int]:
    """Greedy tour over matrix indices 1..K starting from the platform."""
    K = dist.shape[0] - 1
    left = set(range(1, K + 1))
    cur, tour = 0, []
    while left:
        nxt = min(left, key=lambda j: (dist[cur, j], j))
        tour.append(nxt)
        left.remove(nxt)
        cur = nxt
    return tour


def two_opt(dist: np.ndarray, tour: list[int], max_rounds: int = 100) -> list[int]:
    """2-opt on the closed loop through the platform (uses the symmetric part of dist)."""
    path = [0] + list(tour) + [0]
    n = len(path)
    sym = 0.5 * (dist + dist.T)
    for _ in range(max_rounds):
        improved = False
        for i in range(1, n - 2):
            for j in range(i + 1, n - 1):
                a, b, c, d = path[i - 1], path[i], path[j], path[j + 1]
                delta = sym[a, c] + sym[b, d] - sym[a, b] - sym[c, d]
                if delta < -1e-9:
                    path[i : j + 1] = path[i : j + 1][::-1]
                    improved = True
        if not improved:
            break
    return path[1:-1]


def tsp_tour(dist: np.ndarray) -> list[int]:
    return two_opt(dist, nearest_neighbor_tour(dist))


# --------------------------------------------------------------------------- GA driver

def solve_advrp_ga(
    n_flights: int,
    dist: np.ndarray,
    budget: RouteBudget,
    ga: GaParams | None = None,
    seeds: list[list[int]] | None = None,
) -> tuple[ClusterPlan, float]:
    """Best-found plan with exactly n_flights loops under the penalised cost.

    ``seeds`` are giant tours (node ids) injected into the initial population.
    """
    ga = ga or GaParams()
    K = len(budget.node_ids)
    if not 1 <= n_flights <= K:
        raise ValueError(f"n_flights must lie in [1, {K}]")
    dist = np.ascontiguousarray(dist, dtype=float)
    pos = budget.index_of()
    rng = np.random.default_rng(ga.seed)
    pop = np.empty((ga.population, K), np.int64)
    starts = [tsp_tour(dist)]
    for s in seeds or []:
        if sorted(s) == sorted(budget.node_ids):
            starts.append([pos[n] for n in s])
    for p in range(ga.population):
        pop[p] = starts[p] if p < len(starts) else rng.permutation(np.arange(1, K + 1))
    perm, cuts, cost = _ga(
        pop,
        n_flights,
        dist,
        budget.collection_energy,
        budget.time_per_metre,
        budget.penalty,
        budget.energy_avail,
        budget.energy_per_metre,
        ga.generations,
        ga.crossover_rate,
        ga.mutation_rate,
        ga.tournament,
        ga.stall_generations,
        ga.local_search_rate,
        int(ga.seed),
    )
    ids = budget.node_ids
    orders = [[ids[perm[k] - 1] for k in range(cuts[j], cuts[j + 1])] for j in range(n_flights)]
    return ClusterPlan(orders), float(cost)


def singleton_cost(dist: np.ndarray, budget: RouteBudget) -> float:
    """Penalised cost of the plan that returns to the platform after every node."""
    plan = ClusterPlan([[nid] for nid in budget.node_ids])
    return penalized_cost(plan, dist, budget)


@dataclass
class BisectionRecord:
    n_flights: int
    cost: float
    feasible: bool


def bisection_clusters(
    dist: np.ndarray,
    budget: RouteBudget,
    n_lb: int,
    ga: GaParams | None = None,
    seeds: list[list[int]] | None = None,
    trace: list | None = None,
) -> ClusterPlan:
    """Smallest flight count N in [n_lb, K] whose best-found cost does not exceed the singleton cost.

    N = n_lb is tried first; otherwise the bracket (n_lb, K] is bisected with a
    ceiling midpoint, assuming feasibility is monotone in N.
    """
    K = len(budget.node_ids)
    n_lb = int(min(max(1, n_lb), K))
    p_K = singleton_cost(dist, budget)
    tol = 1e-9 * max(1.0, abs(p_K))
    cache: dict[int, tuple[ClusterPlan, float]] = {}
    singletons = ClusterPlan([[nid] for nid in budget.node_ids])

    def attempt(n):
        if n not in cache:
            if n == K:
                cache[n] = (singletons, p_K)
            else:
                cache[n] = solve_advrp_ga(n, dist, budget, ga, seeds)
        plan, cost = cache[n]
        ok = cost <= p_K + tol
        if trace is not None:
            trace.append(BisectionRecord(n, cost, ok))
        return ok

    if attempt(n_lb):
        return cache[n_lb][0]
    lo, hi = n_lb, K
    while hi - lo > 1:
        mid = (lo + hi + 1) // 2
        if attempt(mid):
            hi = mid
        else:
            lo = mid
    if hi == K and K not in cache:
        attempt(K)
    return cache[hi][0]
