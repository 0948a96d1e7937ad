"""Problem instance: sensor field, UAV, charging platform, channel, discretization.

A :class:`Scenario` is immutable once built. Files are JSON documents with the
top-level keys ``nodes``, ``uav``, ``platform``, ``channel``, ``discretization``
and ``seed``. Units are SI throughout (m, m/s, J, W, N, Hz, bits).
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ScenarioError(ValueError):
    """Raised when a scenario file cannot be parsed or fails validation."""

    def __init__(self, message: str, violations: list[str] | None = None):
        self.violations = list(violations or [])
        if self.violations:
            message = message + ": " + "; ".join(self.violations)
        super().__init__(message)


@dataclass(frozen=True)
class SensorNode:
    id: int
    position: tuple[float, float]
    demand_bits: float
    coverage_radius: float

    @property
    def xy(self) -> np.ndarray:
        return np.asarray(self.position, dtype=float)


@dataclass(frozen=True)
class UavParams:
    altitude: float = 100.0
    v_max: float = 30.0
    v_fly: float = 18.0
    v_vertical: float = 6.0
    a_max: float = 5.0
    battery_joules: float = 1.0e5
    weight: float = 20.0
    blade_profile_power: float = 79.86
    induced_power: float = 88.63
    tip_speed: float = 120.0
    mean_induced_velocity: float = 4.03
    fuselage_drag_ratio: float = 0.6
    rotor_solidity: float = 0.05
    air_density: float = 1.225
    rotor_disc_area: float = 0.503


@dataclass(frozen=True)
class ChargingPlatform:
    position: tuple[float, float] = (2500.0, 2500.0)
    altitude: float = 15.0
    charge_power: float = 150.0

    @property
    def xy(self) -> np.ndarray:
        return np.asarray(self.position, dtype=float)


@dataclass(frozen=True)
class ChannelParams:
    bandwidth: float = 1.0e6
    tx_power: float = 0.1
    ref_gain: float = 1.0e-6  # -60 dB
    noise_power: float = 1.0e-14  # -110 dBm
    gamma0: float | None = None

    def __post_init__(self):
        if self.gamma0 is None:
            object.__setattr__(self, "gamma0", self.tx_power * self.ref_gain / self.noise_power)


@dataclass(frozen=True)
class Discretization:
    segments_per_sn: int = 40
    max_segment_len: float = 10.0


@dataclass(frozen=True)
class Scenario:
    nodes: tuple[SensorNode, ...]
    uav: UavParams = field(default_factory=UavParams)
    platform: ChargingPlatform = field(default_factory=ChargingPlatform)
    channel: ChannelParams = field(default_factory=ChannelParams)
    disc: Discretization = field(default_factory=Discretization)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))

    @property
    def K(self) -> int:
        return len(self.nodes)

    @property
    def node_ids(self) -> list[int]:
        return [n.id for n in self.nodes]

    def node(self, node_id: int) -> SensorNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(f"unknown node id {node_id}")

    def index_of(self, node_id: int) -> int:
        for i, n in enumerate(self.nodes):
            if n.id == node_id:
                return i
        raise KeyError(f"unknown node id {node_id}")

    def positions(self) -> np.ndarray:
        return np.array([n.position for n in self.nodes], dtype=float).reshape(-1, 2)

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)

    def with_uav(self, **changes) -> "Scenario":
        return dataclasses.replace(self, uav=dataclasses.replace(self.uav, **changes))

    def with_nodes(self, nodes) -> "Scenario":
        return dataclasses.replace(self, nodes=tuple(nodes))


def default_segments(coverage_radius: float, max_segment_len: float = 10.0) -> int:
    """Default segment count M for a coverage radius, clamped to [20, 80]."""
    m = math.ceil(2.0 * coverage_radius / max_segment_len)
    return int(min(80, max(20, m)))


# --------------------------------------------------------------------------- validation

def validate(scenario: Scenario) -> list[str]:
    """Return every violated invariant as a human-readable string."""
    out: list[str] = []
    if len(scenario.nodes) == 0:
        out.append("scenario has no sensor nodes")
    seen: set[int] = set()
    for n in scenario.nodes:
        if n.id in seen:
            out.append(f"node {n.id}: duplicate id")
        seen.add(n.id)
        if not all(math.isfinite(c) for c in n.position):
            out.append(f"node {n.id}: non-finite position")
        if not n.demand_bits > 0:
            out.append(f"node {n.id}: demand_bits must be > 0 (got {n.demand_bits})")
        if not n.coverage_radius > 0:
            out.append(f"node {n.id}: coverage_radius must be > 0 (got {n.coverage_radius})")

    u = scenario.uav
    for f in dataclasses.fields(u):
        val = getattr(u, f.name)
        if not (math.isfinite(val) and val > 0):
            out.append(f"uav.{f.name} must be strictly positive (got {val})")
    if u.v_fly > u.v_max:
        out.append(f"uav.v_fly ({u.v_fly}) exceeds uav.v_max ({u.v_max})")

    p = scenario.platform
    if not p.charge_power > 0:
        out.append(f"platform.charge_power must be > 0 (got {p.charge_power})")
    if not (0 <= p.altitude < u.altitude):
        out.append(f"platform.altitude must satisfy 0 <= H_C < H (got {p.altitude}, H={u.altitude})")
    if not all(math.isfinite(c) for c in p.position):
        out.append("platform: non-finite position")

    c = scenario.channel
    for name in ("bandwidth", "tx_power", "ref_gain", "noise_power"):
        val = getattr(c, name)
        if not (math.isfinite(val) and val > 0):
            out.append(f"channel.{name} must be strictly positive (got {val})")
    if c.noise_power > 0:
        expected = c.tx_power * c.ref_gain / c.noise_power
        if not math.isclose(c.gamma0, expected, rel_tol=1e-12, abs_tol=0.0):
            out.append(f"channel.gamma0 ({c.gamma0}) inconsistent with P_t*beta0/sigma^2 ({expected})")

    d = scenario.disc
    if d.segments_per_sn < 2:
        out.append(f"discretization.segments_per_sn must be >= 2 (got {d.segments_per_sn})")
    if not (0 < d.max_segment_len <= u.altitude / 5.0):
        out.append(
            f"discretization.max_segment_len must satisfy 0 < max_segment_len <= H/5 "
            f"(got {d.max_segment_len}, H={u.altitude})"
        )
    return out


def check(scenario: Scenario) -> Scenario:
    problems = validate(scenario)
    if problems:
        raise ScenarioError("invalid scenario", problems)
    return scenario


# --------------------------------------------------------------------------- I/O

def to_dict(scenario: Scenario) -> dict:
    return {
        "seed": scenario.seed,
        "nodes": [
            {
                "id": n.id,
                "position": list(n.position),
                "demand_bits": n.demand_bits,
                "coverage_radius": n.coverage_radius,
            }
            for n in scenario.nodes
        ],
        "uav": dataclasses.asdict(scenario.uav),
        "platform": {
            "position": list(scenario.platform.position),
            "altitude": scenario.platform.altitude,
            "charge_power": scenario.platform.charge_power,
        },
        "channel": dataclasses.asdict(scenario.channel),
        "discretization": dataclasses.asdict(scenario.disc),
    }


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ScenarioError(f"'{where}' must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ScenarioError(f"unknown keys in '{where}': {sorted(unknown)}")
    return cls(**data)


def from_dict(data: dict) -> Scenario:
    """Build and validate a scenario from its document form."""
    if not isinstance(data, dict):
        raise ScenarioError("scenario document must be an object")
    required = {"nodes", "uav", "platform", "channel", "discretization"}
    missing = required - set(data)
    if missing:
        raise ScenarioError(f"missing top-level keys: {sorted(missing)}")
    try:
        nodes = []
        for raw in data["nodes"]:
            nodes.append(
                SensorNode(
                    id=int(raw["id"]),
                    position=(float(raw["position"][0]), float(raw["position"][1])),
                    demand_bits=float(raw["demand_bits"]),
                    coverage_radius=float(raw["coverage_radius"]),
                )
            )
        plat = dict(data["platform"])
        if "position" in plat:
            plat["position"] = (float(plat["position"][0]), float(plat["position"][1]))
        scenario = Scenario(
            nodes=tuple(nodes),
            uav=_build(UavParams, data["uav"], "uav"),
            platform=_build(ChargingPlatform, plat, "platform"),
            channel=_build(ChannelParams, data["channel"], "channel"),
            disc=_build(Discretization, data["discretization"], "discretization"),
            seed=int(data.get("seed", 0)),
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise ScenarioError(f"malformed scenario document ({exc!r})") from exc
    return check(scenario)


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"cannot parse {path}: {exc}") from exc
    return from_dict(data)


def save_scenario(scenario: Scenario, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(to_dict(scenario), indent=2))
    return path


# --------------------------------------------------------------------------- generators

def default_scenario(
    positions,
    demand: float = 1.0e8,
    coverage_radius: float = 200.0,
    battery: float = 1.0e5,
    platform_xy: tuple[float, float] = (2500.0, 2500.0),
    seed: int = 0,
    segments: int | None = None,
) -> Scenario:
    """Scenario with the simulation-table UAV/channel constants and given node positions."""
    nodes = tuple(
        SensorNode(i + 1, (float(x), float(y)), float(demand), float(coverage_radius))
        for i, (x, y) in enumerate(positions)
    )
    disc = Discretization(
        segments_per_sn=segments if segments is not None else default_segments(coverage_radius),
        max_segment_len=10.0,
    )
    return Scenario(
        nodes=nodes,
        uav=UavParams(battery_joules=float(battery)),
        platform=ChargingPlatform(position=(float(platform_xy[0]), float(platform_xy[1]))),
        channel=ChannelParams(),
        disc=disc,
        seed=seed,
    )


def generate_random(
    k: int,
    side_len: float,
    demand: float,
    seed: int,
    coverage_radius: float = 200.0,
    battery: float = 1.0e5,
    segments: int | None = None,
) -> Scenario:
    """K nodes uniform i.i.d. in [0, side_len]^2 with the platform at the square's centre."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not side_len > 0:
        raise ValueError("side_len must be > 0")
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0.0, side_len, size=(k, 2))
    return default_scenario(
        pts,
        demand=demand,
        coverage_radius=coverage_radius,
        battery=battery,
        platform_xy=(side_len / 2.0, side_len / 2.0),
        seed=seed,
        segments=segments,
    )
