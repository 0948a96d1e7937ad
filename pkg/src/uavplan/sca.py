"""In-coverage trajectory optimisation for one flight by successive convex approximation.

For a fixed cluster and visiting order, every node l gets M+1 waypoints q_l[0..M]
inside its coverage disc and M time slots t_l[1..M]. The non-convex flight-time
problem is rewritten with slack variables

    y  >= induced-power term        t^4 / y^2 <= y^2 + z^2 / v0^2
    A^2 <= t * log2(1 + g0 / (H^2 + d^2)),     d >= ||q - w||
    w  <= z / t <= v                           (segment speed envelope)

and each round replaces the remaining non-convex pieces by global first-order
bounds taken at the current iterate, giving a cone program whose feasible set
contains the current point. Solving it and re-anchoring yields a monotone
sequence of true objective values.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import physics
from .conic import Aff, ConeProgram, SolverError
from .geometry import initial_chord
from .physics import TimeEnergyBreakdown
from .scenario import Scenario

log = logging.getLogger(__name__)

LN2 = math.log(2.0)
T_FLOOR = 1e-6


class InfeasibleClusterError(RuntimeError):
    """The cluster cannot be served in one flight (data or energy)."""


class ScaDivergenceError(RuntimeError):
    """An SCA step increased the true objective beyond tolerance."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])


@dataclass
class InCoverageTrajectory:
    node_id: int
    q: np.ndarray  # (M+1, 2) absolute coordinates
    t: np.ndarray  # (M,) slot durations
    hover: bool = False
    # flown without collecting (its node has failed); counts as flight, not collection
    transit: bool = False

    @property
    def entry(self) -> np.ndarray:
        return self.q[0]

    @property
    def exit(self) -> np.ndarray:
        return self.q[-1]

    @property
    def M(self) -> int:
        return len(self.t)

    def copy(self) -> "InCoverageTrajectory":
        return InCoverageTrajectory(
            self.node_id, np.array(self.q, float), np.array(self.t, float), self.hover, self.transit
        )


@dataclass
class ClusterTrajectory:
    order: list[int]
    trajectories: list[InCoverageTrajectory]
    breakdown: TimeEnergyBreakdown
    objective: float
    trace: list[dict] = field(default_factory=list)

    def traj(self, node_id: int) -> InCoverageTrajectory:
        for tr in self.trajectories:
            if tr.node_id == node_id:
                return tr
        raise KeyError(node_id)

    def path(self, platform_xy) -> np.ndarray:
        """Full horizontal flight path: platform, all in-coverage waypoints, platform."""
        s = np.asarray(platform_xy, float)[None, :]
        return np.vstack([s] + [tr.q for tr in self.trajectories] + [s])


@dataclass
class ScaIterate:
    """Trajectory point plus slack variables at their defining values."""

    q: np.ndarray  # (L, M+1, 2)
    t: np.ndarray  # (L, M)
    z: np.ndarray
    y: np.ndarray
    A: np.ndarray
    d: np.ndarray
    v: np.ndarray  # upper speed envelope
    w: np.ndarray  # lower speed envelope


@dataclass(frozen=True)
class ScaOptions:
    eps_outer: float = 1e-3
    max_iters: int = 30
    tol: float = 1e-6
    monotone_tol: float = 1e-6
    objective: str = "time"  # "time" or "energy"


@dataclass
class ClusterSpec:
    """Static data of one cluster in visiting order."""

    node_ids: list[int]
    centers: np.ndarray  # (L, 2)
    radius: np.ndarray  # (L,)
    demand: np.ndarray  # (L,)

    @classmethod
    def from_scenario(cls, order, scenario: Scenario) -> "ClusterSpec":
        nodes = [scenario.node(i) for i in order]
        return cls(
            node_ids=list(order),
            centers=np.array([n.position for n in nodes], float).reshape(-1, 2),
            radius=np.array([n.coverage_radius for n in nodes], float),
            demand=np.array([n.demand_bits for n in nodes], float),
        )

    @property
    def L(self) -> int:
        return len(self.node_ids)


# --------------------------------------------------------------------------- slacks

def slack_values(q: np.ndarray, t: np.ndarray, spec: ClusterSpec, scenario: Scenario) -> ScaIterate:
    uav, ch = scenario.uav, scenario.channel
    q = np.asarray(q, float)
    t = np.asarray(t, float)
    z = np.linalg.norm(np.diff(q, axis=1), axis=2)
    v0 = uav.mean_induced_velocity
    # y^2 = sqrt(t^4 + z^4/(4 v0^4)) - z^2/(2 v0^2), evaluated without cancellation
    root = np.sqrt(t**4 + z**4 / (4.0 * v0**4))
    y = t**2 / np.sqrt(root + z**2 / (2.0 * v0**2))
    d = np.linalg.norm(q[:, 1:, :] - spec.centers[:, None, :], axis=2)
    A = np.sqrt(t * np.log2(1.0 + ch.gamma0 / (uav.altitude**2 + d**2)))
    speed = z / t
    return ScaIterate(q=q, t=t, z=z, y=y, A=A, d=d, v=speed.copy(), w=speed.copy())


def trajectories_of(it: ScaIterate, spec: ClusterSpec) -> list[InCoverageTrajectory]:
    return [InCoverageTrajectory(nid, it.q[l].copy(), it.t[l].copy()) for l, nid in enumerate(spec.node_ids)]


def iterate_from_trajectories(trajs, spec: ClusterSpec, scenario: Scenario) -> ScaIterate:
    q = np.stack([np.asarray(tr.q, float) for tr in trajs])
    t = np.stack([np.asarray(tr.t, float) for tr in trajs])
    return slack_values(q, t, spec, scenario)


# --------------------------------------------------------------------------- initialisation

def speed_profile(M: int, v_cruise: float, v_f: float, a_max: float) -> np.ndarray:
    """Per-segment speeds: start and end at v_f, change by at most a_max, floor at v_cruise."""
    m = np.arange(1, M + 1)
    ramp = np.maximum(v_f - a_max * (m - 1), v_f - a_max * (M - m))
    return np.maximum(v_cruise, np.minimum(ramp, v_f))


def _chord_bits(chord: np.ndarray, speeds: np.ndarray, center, scenario: Scenario) -> float:
    z = np.linalg.norm(np.diff(chord, axis=0), axis=1)
    return physics.delivered_bits(chord, z / speeds, center, scenario)


def init_chord_trajectory(center, d_th, demand, inbound, outbound, scenario: Scenario) -> InCoverageTrajectory:
    """Straight chord with a ramped speed profile slow enough to deliver the demand."""
    uav = scenario.uav
    M = scenario.disc.segments_per_sn
    chord = initial_chord(center, d_th, inbound, outbound, M, scenario.disc.max_segment_len)
    vf, a = uav.v_fly, uav.a_max

    def bits(vc):
        return _chord_bits(chord, speed_profile(M, vc, vf, a), center, scenario)

    if bits(vf) >= demand:
        vc = vf
    else:
        lo, hi = 1e-9, vf  # bits(lo) must reach the demand
        if bits(lo) < demand:
            raise InfeasibleClusterError("demand cannot be met even by an arbitrarily slow chord")
        for _ in range(200):
            mid = math.sqrt(lo * hi)
            if bits(mid) >= demand:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-12 * hi:
                break
        vc = lo
    speeds = speed_profile(M, vc, vf, a)
    z = np.linalg.norm(np.diff(chord, axis=0), axis=1)
    return InCoverageTrajectory(-1, chord, z / speeds)


def init_iterate(order, scenario: Scenario, warm: dict | None = None) -> ScaIterate:
    """Initial point: warm trajectories where given, otherwise ramped chords along the route."""
    spec = ClusterSpec.from_scenario(order, scenario)
    s = scenario.platform.xy
    warm = warm or {}
    M = scenario.disc.segments_per_sn
    trajs = []
    for l, nid in enumerate(spec.node_ids):
        if nid in warm and len(warm[nid].t) == M and not warm[nid].hover:
            trajs.append(warm[nid].copy())
            continue
        prev = s if l == 0 else spec.centers[l - 1]
        nxt = s if l == spec.L - 1 else spec.centers[l + 1]
        c = spec.centers[l]
        inbound = c - prev
        outbound = nxt - c
        if np.linalg.norm(inbound) < 1e-9:
            inbound = outbound if np.linalg.norm(outbound) > 1e-9 else np.array([1.0, 0.0])
        if np.linalg.norm(outbound) < 1e-9:
            outbound = inbound
        tr = init_chord_trajectory(c, spec.radius[l], spec.demand[l], inbound, outbound, scenario)
        tr.node_id = nid
        trajs.append(tr)
    return iterate_from_trajectories(trajs, spec, scenario)


# --------------------------------------------------------------------------- subproblem

@dataclass
class ConvexSubproblem:
    """Convex restriction of the trajectory problem around an iterate.

    Holds only numbers; :func:`solve_subproblem` turns it into a cone program,
    and an independent modelling layer can consume the same fields.
    """

    spec: ClusterSpec
    scenario: Scenario
    it: ScaIterate
    objective: str = "time"
    energy_cap: float | None = None
    legs: bool = True
    frozen: np.ndarray | None = None  # (L,) bool
    pinned: list = field(default_factory=list)  # (l, m, xy)
    # linearisation data
    rate0: np.ndarray | None = None  # log2(1 + g0/(H^2 + d_i^2))
    rate_slope: np.ndarray | None = None  # -d/d(d^2) of the above, > 0
    sigma: np.ndarray | None = None  # product-splitting scale for v*t, w*t
    direction: np.ndarray | None = None  # unit segment directions at the iterate

    # objective / energy coefficients (filled by build_subproblem)
    coef: dict = field(default_factory=dict)


def energy_coefficients(scenario: Scenario) -> dict:
    uav = scenario.uav
    p_fly = physics.propulsion_power(uav.v_fly, uav)
    t_ad, e_ad = physics.vertical_transit(uav, scenario.platform)
    return {
        "leg": p_fly / uav.v_fly,  # J per metre of cruise
        "t": uav.blade_profile_power,
        "g2": 3.0 * uav.blade_profile_power / uav.tip_speed**2,
        "y": uav.induced_power,
        "r3": 0.5 * uav.fuselage_drag_ratio * uav.air_density * uav.rotor_solidity * uav.rotor_disc_area,
        "e_ad": e_ad,
        "t_ad": t_ad,
    }


def objective_coefficients(scenario: Scenario, objective: str, legs: bool) -> dict:
    e = energy_coefficients(scenario)
    if objective == "energy":
        return {
            "leg": e["leg"] if legs else 0.0,
            "t": e["t"],
            "g2": e["g2"],
            "y": e["y"],
            "r3": e["r3"],
            "const": e["e_ad"] if legs else 0.0,
        }
    if objective != "time":
        raise ValueError(f"unknown objective {objective!r}")
    pc = scenario.platform.charge_power
    vf = scenario.uav.v_fly
    return {
        "leg": (1.0 / vf + e["leg"] / pc) if legs else 0.0,
        "t": 1.0 + e["t"] / pc,
        "g2": e["g2"] / pc,
        "y": e["y"] / pc,
        "r3": e["r3"] / pc,
        "const": (e["t_ad"] + e["e_ad"] / pc) if legs else 0.0,
    }


def build_subproblem(
    it: ScaIterate,
    spec: ClusterSpec,
    scenario: Scenario,
    objective: str = "time",
    energy_cap: float | None = None,
    legs: bool = True,
    frozen=None,
    pinned=None,
) -> ConvexSubproblem:
    uav, ch = scenario.uav, scenario.channel
    b = uav.altitude**2
    g0 = ch.gamma0
    s_i = it.d**2
    rate0 = np.log2(1.0 + g0 / (b + s_i))
    rate_slope = g0 / (LN2 * (b + s_i) * (b + s_i + g0))
    sigma = np.sqrt(np.maximum(it.v, 0.5) / np.maximum(it.t, T_FLOOR))
    dq = np.diff(it.q, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        direction = np.where(it.z[..., None] > 1e-9, dq / it.z[..., None], 0.0)
    sub = ConvexSubproblem(
        spec=spec,
        scenario=scenario,
        it=it,
        objective=objective,
        energy_cap=energy_cap,
        legs=legs,
        frozen=np.zeros(spec.L, bool) if frozen is None else np.asarray(frozen, bool),
        pinned=list(pinned or []),
        rate0=rate0,
        rate_slope=rate_slope,
        sigma=sigma,
        direction=direction,
    )
    sub.coef = objective_coefficients(scenario, objective, legs)
    sub.coef["energy"] = energy_coefficients(scenario)
    return sub


def surrogate_rate(sub: ConvexSubproblem, d) -> np.ndarray:
    """Lower bound on log2(1 + g0/(H^2 + d^2)) linear in d^2, tight at the iterate."""
    return sub.rate0 - sub.rate_slope * (np.asarray(d, float) ** 2 - sub.it.d**2)


def surrogate_y_rhs(sub: ConvexSubproblem, y, dq) -> np.ndarray:
    """Concave lower bound of y^2 + z^2/v0^2 used on the right of t^4/y^2 <= ..."""
    it = sub.it
    v0 = sub.scenario.uav.mean_induced_velocity
    dq_i = np.diff(it.q, axis=1)
    lin_z2 = 2.0 * np.sum(dq_i * dq, axis=-1) - it.z**2
    return 2.0 * it.y * y - it.y**2 + lin_z2 / v0**2


def product_lower(sub: ConvexSubproblem, v, t) -> np.ndarray:
    """Concave under-estimator of v*t, tight at the iterate."""
    s = sub.sigma
    a = sub.it.v / s + s * sub.it.t
    return a * (v / s + s * t) - 0.5 * a**2 - 0.5 * (v / s) ** 2 - 0.5 * (s * t) ** 2


def product_upper(sub: ConvexSubproblem, w, t) -> np.ndarray:
    """Convex over-estimator of w*t, tight at the iterate."""
    s = sub.sigma
    bw = sub.it.w / s - s * sub.it.t
    return 0.25 * (w / s + s * t) ** 2 - 0.25 * (2.0 * bw * (w / s - s * t) - bw**2)


def iterate_point(sub: ConvexSubproblem) -> dict:
    """The current iterate expressed in the subproblem's variables."""
    it = sub.it
    z = it.z
    legs = physics.cruise_legs(trajectories_of(it, sub.spec), sub.scenario.platform.position)
    return {
        "q": it.q,
        "t": it.t,
        "y": it.y,
        "A": it.A,
        "d": it.d,
        "v": it.v,
        "w": it.w,
        "zz": z,
        "g2": z**2 / it.t,
        "r3": z**3 / it.t**2,
        "s2": z**2 / it.t,
        "u": it.t**2 / it.y,
        "h": it.A**2 / it.t,
        "e": legs,
    }


def surrogate_objective(sub: ConvexSubproblem, x: dict) -> float:
    c = sub.coef
    val = c["const"] + c["t"] * np.sum(x["t"]) + c["g2"] * np.sum(x["g2"]) + c["y"] * np.sum(x["y"])
    val += c["r3"] * np.sum(x["r3"])
    if sub.legs:
        val += c["leg"] * np.sum(x["e"])
    return float(val)


def surrogate_energy(sub: ConvexSubproblem, x: dict) -> float:
    e = sub.coef["energy"]
    val = e["t"] * np.sum(x["t"]) + e["g2"] * np.sum(x["g2"]) + e["y"] * np.sum(x["y"]) + e["r3"] * np.sum(x["r3"])
    if sub.legs:
        val += e["leg"] * np.sum(x["e"]) + e["e_ad"]
    return float(val)


def constraint_residuals(sub: ConvexSubproblem, x: dict) -> dict:
    """Violation (>0 means violated) of every convex constraint at a candidate point."""
    sc = sub.scenario
    uav = sc.uav
    spec = sub.spec
    q, t = np.asarray(x["q"]), np.asarray(x["t"])
    dq = np.diff(q, axis=1)
    zn = np.linalg.norm(dq, axis=2)
    off = q - spec.centers[:, None, :]
    res = {
        "coverage": np.max(np.linalg.norm(off, axis=2) - spec.radius[:, None]),
        "distance_slack": np.max(np.linalg.norm(off[:, 1:], axis=2) - x["d"]),
        "segment_norm": np.max(zn - x["zz"]),
        "segment_len": np.max(x["zz"] - sc.disc.max_segment_len),
        "segment_speed": np.max(x["zz"] - uav.v_max * t),
        "g2": np.max(zn**2 / t - x["g2"]),
        "r3": np.max(x["zz"] ** 3 / t**2 - x["r3"]),
        "y_aux": np.max(t**2 / x["y"] - x["u"]),
        "y_sur": np.max(x["u"] ** 2 - surrogate_y_rhs(sub, x["y"], dq)),
        "throughput": np.max(
            sub.spec.demand / sc.channel.bandwidth
            - np.sum(2.0 * sub.it.A * x["A"] - sub.it.A**2, axis=1)
        ),
        "rate_aux": np.max(x["A"] ** 2 / t - x["h"]),
        "rate_sur": np.max(x["h"] - surrogate_rate(sub, x["d"])),
        "speed_upper": np.max(x["zz"] - product_lower(sub, x["v"], t)),
        "speed_lower": np.max(product_upper(sub, x["w"], t) - np.sum(sub.direction * dq, axis=2)),
        "speed_change": np.max(
            np.concatenate(
                [
                    (x["v"][:, :-1] - x["w"][:, 1:] - uav.a_max).ravel(),
                    (x["v"][:, 1:] - x["w"][:, :-1] - uav.a_max).ravel(),
                    [-np.inf],
                ]
            )
        ),
        "entry_exit_speed": np.max(
            np.concatenate(
                [
                    x["v"][:, 0] - uav.v_fly - uav.a_max,
                    uav.v_fly - uav.a_max - x["w"][:, 0],
                    x["v"][:, -1] - uav.v_fly - uav.a_max,
                    uav.v_fly - uav.a_max - x["w"][:, -1],
                ]
            )
        ),
    }
    if sub.legs:
        legs = physics.cruise_legs(
            [InCoverageTrajectory(0, q[l], t[l]) for l in range(spec.L)], sc.platform.position
        )
        res["legs"] = np.max(legs - x["e"])
    if sub.energy_cap is not None:
        res["energy"] = surrogate_energy(sub, x) - sub.energy_cap
    return {k: float(v) for k, v in res.items()}


def _build_program(sub: ConvexSubproblem):
    """Assemble the cone program; returns (program, variable index map, objective scale)."""
    sc = sub.scenario
    uav = sc.uav
    spec = sub.spec
    it = sub.it
    L, M = it.t.shape
    n = L * M
    prog = ConeProgram()
    V = {
        "q": prog.var(L, M + 1, 2),
        **{k: prog.var(L, M) for k in ("t", "y", "A", "d", "v", "w", "zz", "g2", "r3", "u", "h", "s2")},
    }
    if sub.legs:
        V["e"] = prog.var(L + 1)

    def seg(name):
        return Aff.of(V[name])

    # waypoint variables are offsets from the node centres (q = centre + delta) for conditioning
    qx_all = Aff.of(V["q"][:, :, 0])
    qy_all = Aff.of(V["q"][:, :, 1])
    qend_x = Aff.of(V["q"][:, 1:, 0])
    qend_y = Aff.of(V["q"][:, 1:, 1])
    dqx = Aff.of(V["q"][:, 1:, 0]) - Aff.of(V["q"][:, :-1, 0])
    dqy = Aff.of(V["q"][:, 1:, 1]) - Aff.of(V["q"][:, :-1, 1])
    t, y, A, d = seg("t"), seg("y"), seg("A"), seg("d")
    v, w, zz, g2, r3, u, h, s2 = (seg(k) for k in ("v", "w", "zz", "g2", "r3", "u", "h", "s2"))

    rad_all = np.repeat(spec.radius, M + 1)

    # coverage disc for every waypoint
    prog.add_soc([Aff.constant(rad_all, L * (M + 1)), qx_all, qy_all])
    # distance slack d >= ||q[m] - w||, m = 1..M
    prog.add_soc([d, qend_x, qend_y])
    # segment length epigraph and limits
    prog.add_soc([zz, dqx, dqy])
    prog.add_nonneg(sc.disc.max_segment_len - zz)
    prog.add_nonneg(uav.v_max * t - zz)
    prog.add_nonneg(t - T_FLOOR)
    # z^2 / t <= g2
    prog.add_soc([g2 + t, 2.0 * dqx, 2.0 * dqy, g2 - t])
    # z^3 / t^2 <= r3
    # z^3 / t^2 <= r3 through zz^2 / t <= s2 and s2^2 / zz <= r3 (two rotated cones)
    prog.add_soc([s2 + t, 2.0 * zz, s2 - t])
    prog.add_soc([r3 + zz, 2.0 * s2, r3 - zz])
    # t^2 / y <= u and u^2 <= concave lower bound of y^2 + z^2/v0^2
    prog.add_soc([u + y, 2.0 * t, u - y])
    v0 = uav.mean_induced_velocity
    dq_i = np.diff(it.q, axis=1)
    yi = it.y.ravel()
    Y = (
        2.0 * yi * y
        - yi**2
        + (2.0 * (dq_i[..., 0].ravel() * dqx + dq_i[..., 1].ravel() * dqy) - it.z.ravel() ** 2) / v0**2
    )
    prog.add_soc([Y + 1.0, 2.0 * u, Y - 1.0])
    # throughput: sum_m (2 A_i A - A_i^2) >= Q / B, one row per node (scaled to O(1))
    Ai = it.A
    for l in range(L):
        need = spec.demand[l] / sc.channel.bandwidth
        row = Aff(1, [(V["A"][l], 2.0 * Ai[l] / need)], [-np.sum(Ai[l] ** 2) / need - 1.0])
        prog.add_nonneg(row)
    # A^2 / t <= h and h <= rate0 - slope (d^2 - d_i^2)
    prog.add_soc([h + t, 2.0 * A, h - t])
    slope = sub.rate_slope.ravel()
    S = (sub.rate0.ravel() + slope * it.d.ravel() ** 2 - h) / slope
    rho = np.maximum(it.d.ravel(), 10.0)  # S >= d^2 scaled to O(d)
    prog.add_soc([S / rho + rho, 2.0 * d, S / rho - rho])
    # z <= lower bound of v*t  (v is an upper speed envelope)
    sg = sub.sigma.ravel()
    av = it.v.ravel() / sg + sg * it.t.ravel()
    R = av * (v / sg + sg * t) - 0.5 * av**2 - zz
    prog.add_soc([2.0 * R + 1.0, 2.0 * (v / sg), 2.0 * (sg * t), 2.0 * R - 1.0])
    # upper bound of w*t <= directional progress <= z  (w is a lower speed envelope)
    bw = it.w.ravel() / sg - sg * it.t.ravel()
    ux = sub.direction[..., 0].ravel()
    uy = sub.direction[..., 1].ravel()
    R2 = ux * dqx + uy * dqy + 0.25 * (2.0 * bw * (w / sg - sg * t) - bw**2)
    prog.add_soc([4.0 * R2 + 1.0, 2.0 * (w / sg + sg * t), 4.0 * R2 - 1.0])
    # speed change between consecutive segments and entry/exit speed anchoring
    amax, vf = uav.a_max, uav.v_fly
    if M > 1:
        vi = V["v"]
        wi = V["w"]
        prog.add_nonneg(amax - Aff.of(vi[:, :-1]) + Aff.of(wi[:, 1:]))
        prog.add_nonneg(amax - Aff.of(vi[:, 1:]) + Aff.of(wi[:, :-1]))
    for col in (0, M - 1):
        prog.add_nonneg(vf + amax - Aff.of(V["v"][:, col]))
        prog.add_nonneg(Aff.of(V["w"][:, col]) - (vf - amax))
    # cruise legs between coverage discs
    energy_terms = None
    if sub.legs:
        s = sc.platform.xy
        e = Aff.of(V["e"])
        cen = spec.centers
        fx = [Aff.constant(s[0], 1)] + [Aff.of(V["q"][l, M, 0:1]) + cen[l, 0] for l in range(L)]
        fy = [Aff.constant(s[1], 1)] + [Aff.of(V["q"][l, M, 1:2]) + cen[l, 1] for l in range(L)]
        tx = [Aff.of(V["q"][l, 0, 0:1]) + cen[l, 0] for l in range(L)] + [Aff.constant(s[0], 1)]
        ty = [Aff.of(V["q"][l, 0, 1:2]) + cen[l, 1] for l in range(L)] + [Aff.constant(s[1], 1)]
        for j in range(L + 1):
            prog.add_soc([Aff.of(V["e"][j : j + 1]), tx[j] - fx[j], ty[j] - fy[j]])
    ec = sub.coef["energy"]
    if sub.energy_cap is not None:
        energy = (ec["t"] * t).sum() + (ec["g2"] * g2).sum() + (ec["y"] * y).sum() + (ec["r3"] * r3).sum()
        if sub.legs:
            energy = energy + (ec["leg"] * Aff.of(V["e"])).sum() + ec["e_ad"]
        prog.add_nonneg((sub.energy_cap - energy) * 1e-3)
    # frozen nodes and pinned waypoints
    for l in np.flatnonzero(sub.frozen):
        prog.add_zero(Aff.of(V["q"][l]) - (it.q[l] - spec.centers[l]).ravel())
        prog.add_zero(Aff.of(V["t"][l]) - it.t[l])
    for l, m, xy in sub.pinned:
        prog.add_zero(Aff.of(V["q"][l, m]) - (np.asarray(xy, float) - spec.centers[l]))

    c = sub.coef
    obj = (c["t"] * t).sum() + (c["g2"] * g2).sum() + (c["y"] * y).sum() + (c["r3"] * r3).sum()
    if sub.legs:
        obj = obj + (c["leg"] * Aff.of(V["e"])).sum()
    # unit-size cost vector keeps the solver's dual residual test meaningful
    scale = max(abs(c[k]) for k in ("t", "g2", "y", "r3", "leg"))
    prog.minimize(obj * (1.0 / scale))
    return prog, V, scale


def solve_subproblem(sub: ConvexSubproblem, tol: float = 1e-6) -> tuple[dict, float, dict]:
    """Solve the convex restriction; returns (point, surrogate objective, solver info)."""
    prog, V, scale = _build_program(sub)

    def extract(x):
        point = {k: x[idx] for k, idx in V.items()}
        point["q"] = point["q"] + sub.spec.centers[:, None, :]
        return point

    try:
        x, info = prog.solve(tol=min(tol, 1e-9), max_iter=400)
    except SolverError as exc:
        # a stalled solve is still usable when its point satisfies the restriction
        # and does not lose against the current iterate
        if exc.x is None or not np.all(np.isfinite(exc.x)):
            raise
        point = extract(exc.x)
        here = surrogate_objective(sub, iterate_point(sub))
        cand = slack_values(point["q"], point["t"], sub.spec, sub.scenario)
        if max_true_violation(cand, sub.spec, sub.scenario) > 1e-6 or surrogate_objective(sub, point) > here:
            raise
        x, info = exc.x, exc.info
    point = extract(x)
    value = surrogate_objective(sub, point)
    return point, value, info


# --------------------------------------------------------------------------- evaluation

def make_cluster(order, trajectories, scenario: Scenario, trace=None) -> ClusterTrajectory:
    ct = ClusterTrajectory(list(order), list(trajectories), TimeEnergyBreakdown(), 0.0, list(trace or []))
    ct.breakdown = physics.cluster_breakdown(ct, scenario)
    ct.objective = ct.breakdown.t_total
    return ct


def evaluate_objective(cluster_traj: ClusterTrajectory, scenario: Scenario) -> float:
    """Flight completion time written out term by term as in the trajectory objective."""
    uav = scenario.uav
    pc = scenario.platform.charge_power
    p0, pi = uav.blade_profile_power, uav.induced_power
    v0 = uav.mean_induced_velocity
    k3 = 0.5 * uav.fuselage_drag_ratio * uav.air_density * uav.rotor_solidity * uav.rotor_disc_area
    legs = physics.cruise_legs(cluster_traj.trajectories, scenario.platform.position)
    total = physics.leg_time_coefficient(scenario) * float(np.sum(legs))
    for tr in cluster_traj.trajectories:
        t = np.asarray(tr.t, float)
        z = np.linalg.norm(np.diff(np.asarray(tr.q, float), axis=0), axis=1)
        total += p0 / pc * np.sum((1.0 + pc / p0) * t + 3.0 / uav.tip_speed**2 * z**2 / t)
        total += pi / pc * np.sum(np.sqrt(np.sqrt(t**4 + z**4 / (4.0 * v0**4)) - z**2 / (2.0 * v0**2)))
        total += k3 / pc * np.sum(z**3 / t**2)
    t_ad, _ = physics.vertical_transit(uav, scenario.platform)
    total += (1.0 + physics.vertical_power(uav) / pc) * t_ad
    return float(total)


def true_value(it: ScaIterate, spec: ClusterSpec, scenario: Scenario, objective: str, legs: bool) -> tuple[float, float]:
    """(objective, flight energy) evaluated by direct formulas, not slacks."""
    ct = make_cluster(spec.node_ids, trajectories_of(it, spec), scenario)
    b = ct.breakdown
    if legs:
        energy = b.e_total
        obj = b.t_total if objective == "time" else b.e_total
    else:
        energy = b.e_com
        obj = b.t_com + b.e_com / scenario.platform.charge_power if objective == "time" else b.e_com
    return obj, energy


def max_true_violation(it: ScaIterate, spec: ClusterSpec, scenario: Scenario) -> float:
    """Largest violation of the data, disc, segment and speed constraints (absolute units)."""
    uav = scenario.uav
    viol = [0.0]
    bits = np.sum(it.t * physics.link_rate(it.d, scenario.channel, uav), axis=1)
    viol.append(float(np.max((spec.demand - bits) / spec.demand)))
    off = np.linalg.norm(it.q - spec.centers[:, None, :], axis=2)
    viol.append(float(np.max(off - spec.radius[:, None])))
    viol.append(float(np.max(it.z - np.minimum(scenario.disc.max_segment_len, uav.v_max * it.t))))
    sp_ = it.z / it.t
    if sp_.shape[1] > 1:
        viol.append(float(np.max(np.abs(np.diff(sp_, axis=1)) - uav.a_max)))
    viol.append(float(np.max(np.abs(sp_[:, [0, -1]] - uav.v_fly) - uav.a_max)))
    return max(viol)


# --------------------------------------------------------------------------- Algorithm loop

def _sca_loop(it, spec, scenario, opts: ScaOptions, objective, cap, legs, frozen, pinned, stop_below=None):
    trace = []
    obj, energy = true_value(it, spec, scenario, objective, legs)
    trace.append({"iteration": 0, "objective": obj, "energy": energy, "violation": max_true_violation(it, spec, scenario)})
    for i in range(1, opts.max_iters + 1):
        sub = build_subproblem(it, spec, scenario, objective, cap, legs, frozen, pinned)
        try:
            point, sur, info = solve_subproblem(sub, opts.tol)
        except SolverError as exc:
            log.info("subproblem solve stopped (%s) at iteration %d; keeping current iterate", exc.status, i)
            trace[-1]["stopped"] = exc.status
            break
        new = slack_values(point["q"], point["t"], spec, scenario)
        new_obj, new_energy = true_value(new, spec, scenario, objective, legs)
        rec = {
            "iteration": i,
            "objective": new_obj,
            "surrogate": sur,
            "energy": new_energy,
            "violation": max_true_violation(new, spec, scenario),
            "solver_iterations": info["iterations"],
        }
        trace.append(rec)
        if new_obj > obj * (1.0 + opts.monotone_tol) + 1e-9:
            raise ScaDivergenceError(
                f"objective increased from {obj:.9g} to {new_obj:.9g} at iteration {i}", trace
            )
        rel = abs(obj - new_obj) / max(abs(obj), 1e-12)
        it, obj, energy = new, min(obj, new_obj), new_energy
        if stop_below is not None and energy <= stop_below:
            break
        if rel < opts.eps_outer:
            break
    return it, trace


def optimize_cluster(
    order,
    scenario: Scenario,
    opts: ScaOptions | None = None,
    warm: dict | None = None,
    energy_cap: float | None = None,
    legs: bool = True,
    frozen=None,
    pinned=None,
    init: ScaIterate | None = None,
) -> ClusterTrajectory:
    """Optimise the in-coverage trajectories of one flight for a fixed visiting order.

    ``energy_cap`` defaults to the battery capacity for time minimisation and to
    no cap for energy minimisation. When the starting point breaks the cap, an
    energy-minimising phase runs first; if it cannot get under the cap the
    cluster is reported infeasible.
    """
    opts = opts or ScaOptions()
    spec = ClusterSpec.from_scenario(order, scenario)
    it = init if init is not None else init_iterate(order, scenario, warm)
    objective = opts.objective
    if energy_cap is None and objective == "time" and legs:
        energy_cap = scenario.uav.battery_joules
    trace: list[dict] = []
    if energy_cap is not None:
        _, energy = true_value(it, spec, scenario, objective, legs)
        if energy > energy_cap * (1.0 + 1e-9):
            phase_opts = replace(opts, eps_outer=min(opts.eps_outer, 1e-4))
            it, ptrace = _sca_loop(
                it, spec, scenario, phase_opts, "energy", None, legs, frozen, pinned,
                stop_below=energy_cap * (1.0 - 1e-6),
            )
            for r in ptrace:
                r["phase"] = "energy"
            trace.extend(ptrace)
            _, energy = true_value(it, spec, scenario, objective, legs)
            if energy > energy_cap * (1.0 + 1e-9):
                raise InfeasibleClusterError(
                    f"cluster {list(order)} needs at least {energy:.6g} J > cap {energy_cap:.6g} J"
                )
    it, mtrace = _sca_loop(it, spec, scenario, opts, objective, energy_cap, legs, frozen, pinned)
    for r in mtrace:
        r["phase"] = objective
    trace.extend(mtrace)
    return make_cluster(order, trajectories_of(it, spec), scenario, trace)
