import csv
import json

import numpy as np
import pytest

from uavplan import report
from uavplan.benchmarks import greedy_plan
from uavplan.planner import verify_solution


@pytest.fixture(scope="module")
def line_sol(line3):
    from uavplan.planner import pto

    return pto(line3)


def test_round_trip_totals_identical(tmp_path, line3, line_sol):
    path = report.save_solution(line_sol, line3, tmp_path / "s.json")
    back, sc = report.load_solution(path)
    assert sc == line3
    assert back.totals.as_dict() == line_sol.totals.as_dict()
    assert back.plan == line_sol.plan
    for a, b in zip(back.clusters, line_sol.clusters):
        for ta, tb in zip(a.trajectories, b.trajectories):
            np.testing.assert_array_equal(ta.q, tb.q)
            np.testing.assert_array_equal(ta.t, tb.t)
    assert verify_solution(back, sc).ok


def test_hover_flags_survive(tmp_path, line3):
    g = greedy_plan(line3)
    back, _ = report.solution_from_dict(json.loads(json.dumps(report.solution_to_dict(g, line3))))
    assert all(tr.hover for ct in back.clusters for tr in ct.trajectories)
    assert back.completion_time == g.completion_time


def test_rejects_foreign_documents():
    with pytest.raises(ValueError):
        report.solution_from_dict({"format": "other"})
    with pytest.raises(ValueError):
        report.solution_from_dict({"format": report.FORMAT, "version": 99})


def test_export_files(tmp_path, line3, line_sol):
    g = greedy_plan(line3)
    files = report.export_solution(line_sol, line3, tmp_path, prefix="pto", others={"greedy": g})
    assert set(files) == {"solution", "waypoints", "breakdown", "plot_data", "trace"}
    rows = list(csv.reader(open(files["breakdown"])))
    assert rows[0] == report.BREAKDOWN_HEADER
    assert rows[-1][0] == "total"
    body = np.array([[float(x) for x in r[1:]] for r in rows[1:-1]])
    np.testing.assert_allclose(body.sum(axis=0), [float(x) for x in rows[-1][1:]], rtol=1e-12)
    wp = list(csv.reader(open(files["waypoints"])))
    assert wp[0] == report.WAYPOINT_HEADER
    n_pts = sum(len(tr.q) for ct in line_sol.clusters for tr in ct.trajectories)
    assert len(wp) - 1 == n_pts
    pd = json.loads(open(files["plot_data"]).read())
    assert set(pd["time_allocation"]) == {"pto", "greedy"}
    assert len(pd["coverage"]) == len(line3.nodes)
    assert pd["series"][0]["x_m"][0] == pytest.approx(line3.platform.position[0])
