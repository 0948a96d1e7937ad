"""Parameter sweeps over seeded random instances."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np

from .benchmarks import greedy_plan, hmode_plan
from .planner import InfeasibleScenarioError, PlannerOptions, PlanningError, pto
from .routing import GaParams
from .scenario import generate_random

PARAMS = {
    "euav": "battery_joules",
    "q": "demand_bits",
    "dth": "coverage_radius_m",
    "k": "n_nodes",
}


@dataclass(frozen=True)
class SweepBase:
    k: int = 20
    side_len: float = 5000.0
    demand: float = 1.0e8
    coverage_radius: float = 200.0
    battery: float = 1.0e5

    def with_param(self, param: str, value: float) -> "SweepBase":
        if param == "euav":
            return replace(self, battery=float(value))
        if param == "q":
            return replace(self, demand=float(value))
        if param == "dth":
            return replace(self, coverage_radius=float(value))
        if param == "k":
            if value != int(value) or value < 1:
                raise ValueError(f"node count must be a positive integer, got {value}")
            return replace(self, k=int(value))
        raise ValueError(f"unknown sweep parameter {param!r}; choose from {sorted(PARAMS)}")

    def scenario(self, seed: int):
        return generate_random(
            self.k, self.side_len, self.demand, seed, coverage_radius=self.coverage_radius, battery=self.battery
        )


def parse_range(text: str) -> list[float]:
    """'a:b:step' (inclusive of b up to rounding) or a comma list."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"range must be a:b:step, got {text!r}")
        a, b, step = (float(p) for p in parts)
        if step <= 0 or b < a:
            raise ValueError(f"empty range {text!r}")
        n = int(math.floor((b - a) / step + 1e-9)) + 1
        return [a + i * step for i in range(n)]
    return [float(p) for p in text.split(",") if p.strip()]


ALGORITHMS = {
    "pto": lambda sc, seed: pto(sc, PlannerOptions(ga=GaParams(seed=seed))),
    "hmode": lambda sc, seed: hmode_plan(sc, GaParams(seed=seed)),
    "greedy": lambda sc, seed: greedy_plan(sc),
}


def run_sweep(param: str, values, seeds, algorithms=("pto",), base: SweepBase | None = None) -> list[dict]:
    """One row per (value, seed, algorithm) with the completion time or the failure reason."""
    base = base or SweepBase()
    rows = []
    for value in values:
        cfg = base.with_param(param, value)
        for seed in seeds:
            sc = cfg.scenario(int(seed))
            for algo in algorithms:
                t0 = time.perf_counter()
                row = {"param": param, "value": value, "seed": int(seed), "algorithm": algo}
                try:
                    sol = ALGORITHMS[algo](sc, int(seed))
                    row.update(status="ok", completion_time_s=sol.completion_time, n_flights=sol.n_flights)
                except (InfeasibleScenarioError, PlanningError) as exc:
                    row.update(status=f"infeasible: {exc}", completion_time_s=float("nan"), n_flights=0)
                row["runtime_s"] = time.perf_counter() - t0
                rows.append(row)
    return rows


def majority_direction(rows, algorithm: str = "pto") -> dict:
    """Per seed, the sign of the completion-time change between consecutive sweep values.

    Returns counts of increasing and decreasing steps over all seeds.
    """
    by_seed: dict[int, list[tuple[float, float]]] = {}
    for r in rows:
        if r["algorithm"] == algorithm and r["status"] == "ok":
            by_seed.setdefault(r["seed"], []).append((r["value"], r["completion_time_s"]))
    up = down = 0
    for pts in by_seed.values():
        pts.sort()
        diffs = np.diff([p[1] for p in pts])
        up += int(np.sum(diffs > 0))
        down += int(np.sum(diffs < 0))
    return {"increasing": up, "decreasing": down}
