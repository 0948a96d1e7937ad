"""Command-line front end.

Exit codes: 0 success, 2 usage error, 3 infeasible scenario, 4 bad input
(missing or invalid file), 5 solver failure, 1 anything else. Errors are
written to stderr as a single JSON object.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import bounds, dynamics, report, sweeps
from .benchmarks import greedy_plan, hmode_plan
from .planner import InfeasibleScenarioError, PlannerOptions, PlanningError, check_feasibility, pto, verify_solution
from .routing import GaParams
from .scenario import ScenarioError, load_scenario
from .sca import InfeasibleClusterError, ScaDivergenceError

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3
EXIT_INPUT = 4
EXIT_SOLVER = 5


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str, detail=None):
        super().__init__(message)
        self.code = code
        self.kind = kind
        self.detail = detail


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(EXIT_USAGE, "usage", message)


def _emit(obj) -> None:
    print(json.dumps(report._clean(obj), indent=1))


# --------------------------------------------------------------------------- scenario input

def _add_scenario_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("scenario (file, or a seeded random instance)")
    g.add_argument("--scenario", type=Path, help="scenario JSON file")
    g.add_argument("--random", type=int, metavar="K", help="generate K nodes uniformly at random")
    g.add_argument("--side", type=float, default=5000.0, help="square side for --random (m)")
    g.add_argument("--demand", type=float, default=1.0e8, help="per-node demand for --random (bit)")
    g.add_argument("--radius", type=float, default=200.0, help="coverage radius for --random (m)")
    g.add_argument("--battery", type=float, default=1.0e5, help="battery capacity for --random (J)")


def _scenario(args):
    if args.scenario is not None:
        if not args.scenario.exists():
            raise CliError(EXIT_INPUT, "missing_file", f"no such file: {args.scenario}")
        return load_scenario(args.scenario)
    if args.random is not None:
        return sweeps.SweepBase(args.random, args.side, args.demand, args.radius, args.battery).scenario(args.seed)
    raise CliError(EXIT_USAGE, "usage", "give --scenario FILE or --random K")


def _options(args) -> PlannerOptions:
    return PlannerOptions(ga=GaParams(seed=args.seed))


def _verified(sol, sc):
    rep = verify_solution(sol, sc)
    if not rep.ok:
        raise CliError(EXIT_SOLVER, "verification_failed", "solution failed verification", rep.failures)
    return rep


def _summary(sol, files=None) -> dict:
    out = {
        "algorithm": sol.algorithm,
        "completion_time_s": sol.completion_time,
        "n_flights": sol.n_flights,
        "orders": sol.plan.orders,
    }
    if files:
        out["files"] = files
    return out


# --------------------------------------------------------------------------- commands

def cmd_plan(args) -> int:
    sc = _scenario(args)
    sol = pto(sc, _options(args))
    _verified(sol, sc)
    files = report.export_solution(sol, sc, args.out) if args.out else None
    _emit(_summary(sol, files))
    return EXIT_OK


def _run_algo(name, sc, args):
    if name == "pto":
        return pto(sc, _options(args))
    if name == "hmode":
        return hmode_plan(sc, GaParams(seed=args.seed))
    return greedy_plan(sc)


def cmd_benchmark(args) -> int:
    sc = _scenario(args)
    algos = ["greedy", "hmode", "pto"] if "all" in args.algo else list(dict.fromkeys(args.algo))
    sols = {}
    for a in algos:
        sols[a] = _run_algo(a, sc, args)
        _verified(sols[a], sc)
    out = {}
    for a, sol in sols.items():
        files = None
        if args.out:
            others = {k: v for k, v in sols.items() if k != a}
            files = report.export_solution(sol, sc, args.out, prefix=a, others=others)
        out[a] = _summary(sol, files)
    _emit(out)
    return EXIT_OK


def cmd_bounds(args) -> int:
    sc = _scenario(args)
    if args.solution is not None:
        if not args.solution.exists():
            raise CliError(EXIT_INPUT, "missing_file", f"no such file: {args.solution}")
        sol, _ = report.load_solution(args.solution)
    else:
        sol = pto(sc, _options(args))
    lb = bounds.completion_lower_bound(sc, sol)
    _emit(
        {
            "n_lb": lb.n_lb,
            "completion_lower_bound_s": lb.value,
            "route_bound_m": lb.route_bound,
            "collection_time_s": lb.collection_time,
            "constant_time_s": lb.constant_time,
            "pto_completion_time_s": sol.completion_time,
            "gap": sol.completion_time / lb.value - 1.0,
        }
    )
    return EXIT_OK


def cmd_feasibility(args) -> int:
    sc = _scenario(args)
    rep = check_feasibility(sc, "approximate" if args.approximate else "exact")
    _emit(rep.to_dict())
    return EXIT_OK if rep.feasible else EXIT_INFEASIBLE


def cmd_adjust(args) -> int:
    for f in (args.solution, args.events):
        if not f.exists():
            raise CliError(EXIT_INPUT, "missing_file", f"no such file: {f}")
    sol, sc = report.load_solution(args.solution)
    try:
        raw = json.loads(args.events.read_text())
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_INPUT, "bad_events", f"cannot parse {args.events}: {exc}") from exc
    items = raw["events"] if isinstance(raw, dict) else raw
    try:
        events = [dynamics.DynamicEvent.from_dict(e) for e in items]
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(EXIT_INPUT, "bad_events", f"invalid event: {exc}") from exc
    adjs = []
    for ev in events:
        try:
            adj = dynamics.apply_event(sol, ev, sc, _options(args))
        except (KeyError, ValueError) as exc:
            raise CliError(EXIT_INPUT, "bad_events", str(exc)) from exc
        _verified(adj.solution, adj.scenario)
        adjs.append({"event": ev.to_dict(), **adj.to_dict()})
        sol, sc = adj.solution, adj.scenario
    out = {"adjustments": adjs, **_summary(sol)}
    if args.out:
        out["files"] = report.export_solution(sol, sc, args.out, prefix="adjusted")
        Path(args.out, "adjustments.json").write_text(json.dumps(report._clean(adjs), indent=1))
    _emit(out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    try:
        values = sweeps.parse_range(args.values)
    except ValueError as exc:
        raise CliError(EXIT_USAGE, "usage", str(exc)) from exc
    base = sweeps.SweepBase(args.k, args.side, args.demand, args.radius, args.battery)
    seeds = [args.seed + i for i in range(args.seeds)]
    algos = ["greedy", "hmode", "pto"] if "all" in args.algo else list(dict.fromkeys(args.algo))
    try:
        rows = sweeps.run_sweep(args.param, values, seeds, algos, base)
    except ValueError as exc:
        raise CliError(EXIT_USAGE, "usage", str(exc)) from exc
    header = ["param", "value", "seed", "algorithm", "status", "completion_time_s", "n_flights", "runtime_s"]
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"sweep_{args.param}.csv"
        with path.open("w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=header)
            w.writeheader()
            w.writerows(rows)
    else:
        w = csv.DictWriter(sys.stdout, fieldnames=header)
        w.writeheader()
        w.writerows(rows)
    return EXIT_OK


# --------------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="uavplan", description="Periodic data-collection planning for a rechargeable UAV.")
    p.add_argument("--seed", type=int, default=0, help="seed for instance generation and the GA")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    sp = sub.add_parser("plan", help="run the alternating planner")
    _add_scenario_args(sp)
    sp.set_defaults(func=cmd_plan)

    sp = sub.add_parser("benchmark", help="run one or more algorithms")
    _add_scenario_args(sp)
    sp.add_argument("--algo", action="append", choices=["greedy", "hmode", "pto", "all"], required=True)
    sp.set_defaults(func=cmd_benchmark)

    sp = sub.add_parser("bounds", help="charging and completion-time lower bounds")
    _add_scenario_args(sp)
    sp.add_argument("--solution", type=Path, help="planner solution to build the bound on")
    sp.set_defaults(func=cmd_bounds)

    sp = sub.add_parser("feasibility", help="per-node dedicated round-trip check")
    _add_scenario_args(sp)
    sp.add_argument("--approximate", action="store_true", help="hover-rate estimate of collection energy")
    sp.set_defaults(func=cmd_feasibility)

    sp = sub.add_parser("adjust", help="apply node addition/failure events to a solution")
    sp.add_argument("--solution", type=Path, required=True)
    sp.add_argument("--events", type=Path, required=True)
    sp.set_defaults(func=cmd_adjust)

    sp = sub.add_parser("sweep", help="completion time over a parameter range")
    sp.add_argument("--param", choices=sorted(sweeps.PARAMS), required=True)
    sp.add_argument("--values", required=True, help="a:b:step or comma list")
    sp.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds from --seed")
    sp.add_argument("--algo", action="append", choices=["greedy", "hmode", "pto", "all"], default=None)
    sp.add_argument("--k", type=int, default=20)
    sp.add_argument("--side", type=float, default=5000.0)
    sp.add_argument("--demand", type=float, default=1.0e8)
    sp.add_argument("--radius", type=float, default=200.0)
    sp.add_argument("--battery", type=float, default=1.0e5)
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING))
        if args.command is None:
            raise CliError(EXIT_USAGE, "usage", "missing command")
        if getattr(args, "algo", "") is None:
            args.algo = ["pto"]
        return args.func(args)
    except CliError as exc:
        err = {"error": exc.kind, "message": str(exc), "exit_code": exc.code}
        if exc.detail is not None:
            err["detail"] = exc.detail
    except InfeasibleScenarioError as exc:
        err = {"error": "infeasible", "message": str(exc), "exit_code": EXIT_INFEASIBLE, "report": exc.report.to_dict()}
    except ScenarioError as exc:
        err = {"error": "invalid_scenario", "message": str(exc), "exit_code": EXIT_INPUT}
    except (PlanningError, InfeasibleClusterError, ScaDivergenceError) as exc:
        err = {"error": "solver_failure", "message": str(exc), "exit_code": EXIT_SOLVER}
    except OSError as exc:
        err = {"error": "io", "message": str(exc), "exit_code": EXIT_INPUT}
    except Exception as exc:  # noqa: BLE001 - last resort, still machine-readable
        err = {"error": type(exc).__name__, "message": str(exc), "exit_code": EXIT_ERROR}
    sys.stderr.write(json.dumps(report._clean(err)) + "\n")
    return err["exit_code"]


if __name__ == "__main__":
    sys.exit(main())
