"""Solution documents, waypoint tables and plot-ready data."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .physics import total_breakdown
from .planner import MissionSolution, assemble
from .routing import ClusterPlan
from .scenario import Scenario, from_dict as scenario_from_dict, to_dict as scenario_to_dict
from .sca import InCoverageTrajectory, make_cluster

FORMAT = "uavplan-solution"
VERSION = 1

BREAKDOWN_UNITS = {
    "t_com": "s",
    "t_fly": "s",
    "t_ad": "s",
    "t_chg": "s",
    "t_total": "s",
    "e_com": "J",
    "e_fly": "J",
    "e_ad": "J",
    "e_total": "J",
}

SCHEMA_UNITS = {
    "scenario.nodes.position": "m",
    "scenario.nodes.demand_bits": "bit",
    "scenario.nodes.coverage_radius": "m",
    "scenario.uav.altitude": "m",
    "scenario.uav.v_max|v_fly|v_vertical|tip_speed|mean_induced_velocity": "m/s",
    "scenario.uav.a_max": "m/s per slot",
    "scenario.uav.battery_joules": "J",
    "scenario.uav.weight": "N",
    "scenario.uav.blade_profile_power|induced_power": "W",
    "scenario.uav.air_density": "kg/m^3",
    "scenario.uav.rotor_disc_area": "m^2",
    "scenario.platform.position|altitude": "m",
    "scenario.platform.charge_power": "W",
    "scenario.channel.bandwidth": "Hz",
    "scenario.channel.tx_power|noise_power": "W",
    "scenario.channel.ref_gain|gamma0": "linear",
    "scenario.discretization.max_segment_len": "m",
    "clusters.trajectories.q_m": "m",
    "clusters.trajectories.t_s": "s",
    "passthrough.offset_m": "m",
    "passthrough.bits": "bit",
    **{f"breakdown.{k}": u for k, u in BREAKDOWN_UNITS.items()},
}


def _clean(obj):
    """Plain JSON types (numpy scalars/arrays and tuples converted)."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


# --------------------------------------------------------------------------- solution document

def solution_to_dict(solution: MissionSolution, scenario: Scenario) -> dict:
    clusters = []
    for ct in solution.clusters:
        clusters.append(
            {
                "order": [int(i) for i in ct.order],
                "trajectories": [
                    {
                        "node_id": int(tr.node_id),
                        "hover": bool(tr.hover),
                        "transit": bool(tr.transit),
                        "q_m": np.asarray(tr.q, float).tolist(),
                        "t_s": np.asarray(tr.t, float).tolist(),
                    }
                    for tr in ct.trajectories
                ],
                "breakdown": ct.breakdown.as_dict(),
                "sca_trace": _clean(ct.trace),
            }
        )
    return {
        "format": FORMAT,
        "version": VERSION,
        "units": SCHEMA_UNITS,
        "algorithm": solution.algorithm,
        "scenario": scenario_to_dict(scenario),
        "plan": solution.plan.to_dict(),
        "clusters": clusters,
        "totals": solution.totals.as_dict(),
        "passthrough": {
            str(k): {"cluster": int(v["cluster"]), "offset_m": float(v["offset"]), "bits": float(v["bits"])}
            for k, v in solution.passthrough.items()
        },
        "trace": _clean(solution.trace),
    }


def solution_from_dict(data: dict) -> tuple[MissionSolution, Scenario]:
    """Rebuild a solution (breakdowns recomputed from the waypoints) and its scenario."""
    if data.get("format") != FORMAT:
        raise ValueError("not a solution document")
    if data.get("version") != VERSION:
        raise ValueError(f"unsupported solution document version {data.get('version')}")
    scenario = scenario_from_dict(data["scenario"])
    plan = ClusterPlan.from_dict(data["plan"])
    clusters = []
    for c in data["clusters"]:
        trajs = [
            InCoverageTrajectory(
                int(tr["node_id"]),
                np.asarray(tr["q_m"], float).reshape(-1, 2),
                np.asarray(tr["t_s"], float).reshape(-1),
                bool(tr.get("hover", False)),
                bool(tr.get("transit", False)),
            )
            for tr in c["trajectories"]
        ]
        clusters.append(make_cluster([int(i) for i in c["order"]], trajs, scenario, c.get("sca_trace")))
    passthrough = {
        int(k): {"cluster": int(v["cluster"]), "offset": float(v["offset_m"]), "bits": float(v["bits"])}
        for k, v in data.get("passthrough", {}).items()
    }
    sol = assemble(plan, clusters, data.get("trace"), data.get("algorithm", "pto"), passthrough)
    return sol, scenario


def save_solution(solution: MissionSolution, scenario: Scenario, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(solution_to_dict(solution, scenario), indent=1))
    return path


def load_solution(path) -> tuple[MissionSolution, Scenario]:
    return solution_from_dict(json.loads(Path(path).read_text()))


# --------------------------------------------------------------------------- tables

WAYPOINT_HEADER = ["cluster", "node_id", "index", "x_m", "y_m", "slot_s", "hover", "transit"]
BREAKDOWN_HEADER = ["cluster"] + [f"{k}_{u}" for k, u in BREAKDOWN_UNITS.items()]


def waypoint_rows(solution: MissionSolution) -> list[list]:
    """One row per waypoint; slot_s is the slot ending at that waypoint (empty for index 0)."""
    rows = []
    for n, ct in enumerate(solution.clusters):
        for tr in ct.trajectories:
            for m, (x, y) in enumerate(np.asarray(tr.q, float)):
                slot = "" if m == 0 else float(tr.t[m - 1])
                rows.append([n, int(tr.node_id), m, float(x), float(y), slot, int(tr.hover), int(tr.transit)])
    return rows


def breakdown_rows(solution: MissionSolution) -> list[list]:
    """Per-flight breakdown rows followed by a totals row (their sum)."""
    rows = [[n] + list(ct.breakdown.as_dict().values()) for n, ct in enumerate(solution.clusters)]
    total = total_breakdown(ct.breakdown for ct in solution.clusters)
    rows.append(["total"] + list(total.as_dict().values()))
    return rows


def _write_csv(path: Path, header, rows) -> Path:
    with path.open("w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)
    return path


# --------------------------------------------------------------------------- plot data

def time_allocation(solution: MissionSolution) -> dict:
    t = solution.totals
    return {"t_com_s": t.t_com, "t_fly_s": t.t_fly, "t_ad_s": t.t_ad, "t_chg_s": t.t_chg, "t_total_s": t.t_total}


def plot_data(solution: MissionSolution, scenario: Scenario, others: dict | None = None) -> dict:
    """Polylines per flight, coverage circles and the time-allocation stack.

    ``others`` maps extra algorithm names to solutions whose allocations are stacked alongside.
    """
    s = scenario.platform.xy
    series = []
    for n, ct in enumerate(solution.clusters):
        path = ct.path(s)
        series.append(
            {
                "cluster": n,
                "order": [int(i) for i in ct.order],
                "x_m": path[:, 0].tolist(),
                "y_m": path[:, 1].tolist(),
                "collection": [
                    {"node_id": int(tr.node_id), "x_m": tr.q[:, 0].tolist(), "y_m": tr.q[:, 1].tolist()}
                    for tr in ct.trajectories
                    if not tr.transit
                ],
            }
        )
    alloc = {solution.algorithm: time_allocation(solution)}
    for name, other in (others or {}).items():
        alloc[name] = time_allocation(other)
    return {
        "units": {"x_m": "m", "y_m": "m", "radius_m": "m", "t_*_s": "s"},
        "platform": {"x_m": float(s[0]), "y_m": float(s[1])},
        "series": series,
        "coverage": [
            {"node_id": n.id, "x_m": n.position[0], "y_m": n.position[1], "radius_m": n.coverage_radius}
            for n in scenario.nodes
        ],
        "time_allocation": alloc,
    }


def export_solution(solution: MissionSolution, scenario: Scenario, out_dir, prefix: str = "", others=None) -> dict:
    """Write the solution document, waypoint and breakdown tables, plot data and trace."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    p = f"{prefix}_" if prefix else ""
    files = {
        "solution": save_solution(solution, scenario, out / f"{p}solution.json"),
        "waypoints": _write_csv(out / f"{p}waypoints.csv", WAYPOINT_HEADER, waypoint_rows(solution)),
        "breakdown": _write_csv(out / f"{p}breakdown.csv", BREAKDOWN_HEADER, breakdown_rows(solution)),
    }
    pd = out / f"{p}plot_data.json"
    pd.write_text(json.dumps(_clean(plot_data(solution, scenario, others)), indent=1))
    files["plot_data"] = pd
    tr = out / f"{p}trace.json"
    tr.write_text(json.dumps(_clean(solution.trace), indent=1))
    files["trace"] = tr
    return {k: str(v) for k, v in files.items()}
