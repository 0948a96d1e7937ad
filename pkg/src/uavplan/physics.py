"""Rotary-wing power, link rate and per-flight time/energy accounting."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scenario import ChannelParams, ChargingPlatform, Scenario, UavParams


@dataclass(frozen=True)
class TimeEnergyBreakdown:
    t_com: float = 0.0
    t_fly: float = 0.0
    t_ad: float = 0.0
    t_chg: float = 0.0
    t_total: float = 0.0
    e_com: float = 0.0
    e_fly: float = 0.0
    e_ad: float = 0.0
    e_total: float = 0.0

    @classmethod
    def from_parts(cls, t_com, t_fly, t_ad, e_com, e_fly, e_ad, charge_power) -> "TimeEnergyBreakdown":
        e_total = e_com + e_fly + e_ad
        t_chg = e_total / charge_power
        return cls(
            t_com=t_com,
            t_fly=t_fly,
            t_ad=t_ad,
            t_chg=t_chg,
            t_total=t_com + t_fly + t_ad + t_chg,
            e_com=e_com,
            e_fly=e_fly,
            e_ad=e_ad,
            e_total=e_total,
        )

    def __add__(self, other: "TimeEnergyBreakdown") -> "TimeEnergyBreakdown":
        return TimeEnergyBreakdown(
            *(getattr(self, k) + getattr(other, k) for k in self.__dataclass_fields__)
        )

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def total_breakdown(parts) -> TimeEnergyBreakdown:
    out = TimeEnergyBreakdown()
    for p in parts:
        out = out + p
    return out


# --------------------------------------------------------------------------- power

def propulsion_power(v, uav: UavParams):
    """Horizontal-flight propulsion power P(v) in W; accepts scalars or arrays."""
    v = np.asarray(v, dtype=float)
    v2 = v * v
    v0sq = uav.mean_induced_velocity**2
    # sqrt(1 + v^4/(4 v0^4)) - v^2/(2 v0^2) rewritten to avoid cancellation at high speed
    a = v2 / (2.0 * v0sq)
    induced = 1.0 / (np.sqrt(1.0 + a * a) + a)
    p = (
        uav.blade_profile_power * (1.0 + 3.0 * v2 / uav.tip_speed**2)
        + uav.induced_power * np.sqrt(induced)
        + 0.5 * uav.fuselage_drag_ratio * uav.air_density * uav.rotor_solidity * uav.rotor_disc_area * v * v2
    )
    return float(p) if p.ndim == 0 else p


def hover_power(uav: UavParams) -> float:
    return uav.blade_profile_power + uav.induced_power


def vertical_power(uav: UavParams) -> float:
    """Climb/descent power P_a(V_a) in W."""
    w, va = uav.weight, uav.v_vertical
    return (
        uav.blade_profile_power
        + 0.5 * w * va
        + 0.5 * w * math.sqrt(va * va + w / (2.0 * uav.air_density * uav.rotor_disc_area))
    )


def vertical_transit(uav: UavParams, platform: ChargingPlatform) -> tuple[float, float]:
    """(time, energy) for one takeoff plus one landing."""
    t_ad = 2.0 * (uav.altitude - platform.altitude) / uav.v_vertical
    if t_ad <= 0.0:
        return 0.0, 0.0
    return t_ad, vertical_power(uav) * t_ad


def takeoff_landing_constant(scenario: Scenario) -> float:
    """Per-flight time constant: vertical transit plus charging back its energy."""
    t_ad, e_ad = vertical_transit(scenario.uav, scenario.platform)
    return t_ad + e_ad / scenario.platform.charge_power


def leg_time_coefficient(scenario: Scenario) -> float:
    """Seconds of completion time per metre of cruise leg (flight plus recharge)."""
    u = scenario.uav
    return 1.0 / u.v_fly + propulsion_power(u.v_fly, u) / (scenario.platform.charge_power * u.v_fly)


def cruise_energy_per_metre(uav: UavParams) -> float:
    return propulsion_power(uav.v_fly, uav) / uav.v_fly


# --------------------------------------------------------------------------- channel

def link_rate(horizontal_dist, channel: ChannelParams, uav: UavParams):
    """Achievable rate in bit/s at a horizontal distance from the node."""
    d = np.asarray(horizontal_dist, dtype=float)
    r = channel.bandwidth * np.log2(1.0 + channel.gamma0 / (uav.altitude**2 + d * d))
    return float(r) if r.ndim == 0 else r


def hover_rate(scenario: Scenario) -> float:
    return link_rate(0.0, scenario.channel, scenario.uav)


# --------------------------------------------------------------------------- trajectories

def segment_lengths(q: np.ndarray) -> np.ndarray:
    return np.linalg.norm(np.diff(q, axis=0), axis=1)


def collection_energy(q: np.ndarray, t: np.ndarray, uav: UavParams) -> float:
    """Energy of flying the in-coverage polyline q with slots t (constant speed per slot)."""
    z = segment_lengths(q)
    return float(np.sum(propulsion_power(z / t, uav) * t))


def delivered_bits(q: np.ndarray, t: np.ndarray, node_xy, scenario: Scenario) -> float:
    """Bits delivered along the polyline, rate evaluated at each slot's end waypoint."""
    d = np.linalg.norm(q[1:] - np.asarray(node_xy, dtype=float), axis=1)
    return float(np.sum(t * link_rate(d, scenario.channel, scenario.uav)))


def cruise_legs(trajectories, platform_xy) -> np.ndarray:
    """Lengths of the cruise legs platform -> q_1[0], q_l[M] -> q_{l+1}[0], q_L[M] -> platform."""
    s = np.asarray(platform_xy, dtype=float)
    pts = [s]
    for tr in trajectories:
        pts.append(tr.q[0])
        pts.append(tr.q[-1])
    pts.append(s)
    pts = np.asarray(pts)
    starts = pts[0::2]
    ends = pts[1::2]
    return np.linalg.norm(ends - starts, axis=1)


def cluster_breakdown(cluster_traj, scenario: Scenario) -> TimeEnergyBreakdown:
    """Time and energy of one flight (one cluster), including its recharge."""
    uav = scenario.uav
    t_com = e_com = t_pass = e_pass = 0.0
    for tr in cluster_traj.trajectories:
        t = np.asarray(tr.t, dtype=float)
        if np.any(t <= 0):
            raise ValueError(f"node {tr.node_id}: non-positive time slot")
        e = collection_energy(np.asarray(tr.q, dtype=float), t, uav)
        if getattr(tr, "transit", False):
            t_pass += float(np.sum(t))
            e_pass += e
        else:
            t_com += float(np.sum(t))
            e_com += e
    legs = cruise_legs(cluster_traj.trajectories, scenario.platform.position)
    t_fly = float(np.sum(legs)) / uav.v_fly + t_pass
    e_fly = propulsion_power(uav.v_fly, uav) * (t_fly - t_pass) + e_pass
    t_ad, e_ad = vertical_transit(uav, scenario.platform)
    return TimeEnergyBreakdown.from_parts(
        t_com, t_fly, t_ad, e_com, e_fly, e_ad, scenario.platform.charge_power
    )
