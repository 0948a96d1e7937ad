import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import small_scenario
from oracles import chord_bits_quadrature
from uavplan import report
from uavplan.dynamics import (
    INSERTED,
    KEPT,
    NEW_SINGLETON,
    REMOVED,
    DynamicEvent,
    adjust_for_addition,
    adjust_for_failure,
    apply_events,
    distance_to_paths,
    insertion_gap_bound,
    pass_through_data,
)
from uavplan.planner import PlannerOptions, pto, verify_solution
from uavplan.scenario import SensorNode, default_scenario

SC = default_scenario([(0.0, 0.0)])
NODE = SC.nodes[0]


def _quad(d0, sc=SC, node=NODE):
    return chord_bits_quadrature(
        d0, node.coverage_radius, sc.uav.altitude, sc.channel.gamma0, sc.channel.bandwidth, sc.uav.v_fly
    )


def test_closed_form_matches_quadrature_sweep():
    for d0 in np.linspace(0.0, NODE.coverage_radius, 50):
        ref = _quad(d0)
        got = pass_through_data(d0, NODE, SC)
        if ref == 0.0:
            assert got == 0.0
        else:
            assert got == pytest.approx(ref, rel=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.floats(20.0, 500.0), st.floats(0.0, 1.0), st.floats(50.0, 300.0))
def test_closed_form_property(radius, frac, altitude):
    sc = default_scenario([(0.0, 0.0)], coverage_radius=radius)
    sc = sc.replace(uav=sc.uav.__class__(**{**sc.uav.__dict__, "altitude": altitude}))
    node = sc.nodes[0]
    d0 = frac * radius
    ref = _quad(d0, sc, node)
    got = pass_through_data(d0, node, sc)
    assert got == pytest.approx(ref, rel=1e-6, abs=1e-6 * max(ref, 1.0))


def test_zero_at_boundary_and_decreasing():
    assert pass_through_data(NODE.coverage_radius, NODE, SC) == 0.0
    vals = [pass_through_data(d, NODE, SC) for d in np.linspace(0, NODE.coverage_radius, 41)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_literal_variant_disagrees_with_integral():
    d0 = 50.0
    assert abs(pass_through_data(d0, NODE, SC, literal=True) - _quad(d0)) > 1e-3 * _quad(d0)


def test_offset_outside_disc_rejected():
    with pytest.raises(ValueError):
        pass_through_data(201.0, NODE, SC)
    with pytest.raises(ValueError):
        pass_through_data(-1.0, NODE, SC)


def test_gap_bound_formula():
    T, L, Q = 3000.0, 400.0, 1e8
    from uavplan.physics import hover_rate

    assert insertion_gap_bound(T, L, Q, SC) == pytest.approx((2 * L / 18.0 + Q / hover_rate(SC)) / T)
    with pytest.raises(ValueError):
        insertion_gap_bound(0.0, L, Q, SC)


def test_event_round_trip():
    ev = DynamicEvent.add(SensorNode(30, (1.0, 2.0), 1e6, 100.0))
    assert DynamicEvent.from_dict(json.loads(json.dumps(ev.to_dict()))) == ev
    assert DynamicEvent.from_dict({"kind": "fail", "id": 3}) == DynamicEvent.fail(3)
    with pytest.raises(ValueError):
        DynamicEvent("explode")
    with pytest.raises(ValueError):
        DynamicEvent.add(SensorNode(1, (0.0, 0.0), -1.0, 100.0))


def _plan_bytes(sol, sc):
    d = report.solution_to_dict(sol, sc)
    return json.dumps({"plan": d["plan"], "clusters": [c["trajectories"] for c in d["clusters"]]}).encode()


def _leg_midpoint(sol, sc):
    path = sol.clusters[0].path(sc.platform.xy)
    seg = np.linalg.norm(np.diff(path, axis=0), axis=1)
    k = int(np.argmax(seg))
    return 0.5 * (path[k] + path[k + 1])


def test_keep_case_leaves_plan_untouched(random8, pto8):
    p = _leg_midpoint(pto8, random8)
    node = SensorNode(100, (float(p[0]), float(p[1])), 1e7, 200.0)
    adj = adjust_for_addition(pto8, node, random8)
    assert adj.action == KEPT
    assert _plan_bytes(adj.solution, random8) == _plan_bytes(pto8, random8)
    assert adj.solution.completion_time == pto8.completion_time
    assert 100 in adj.solution.passthrough
    assert verify_solution(adj.solution, adj.scenario).ok


def test_insertion_respects_gap_bound(random8, pto8):
    p = _leg_midpoint(pto8, random8) + np.array([450.0, 0.0])
    node = SensorNode(101, (float(p[0]), float(p[1])), 1e8, 200.0)
    adj = adjust_for_addition(pto8, node, random8)
    assert adj.action in (INSERTED, NEW_SINGLETON)
    rep = verify_solution(adj.solution, adj.scenario)
    assert rep.ok, rep.failures
    T = pto8.completion_time
    L, _ = distance_to_paths(pto8, node.xy, random8)
    assert adj.distance_to_path == pytest.approx(L)
    if adj.action == INSERTED:
        assert (adj.solution.completion_time - T) / T <= insertion_gap_bound(T, L, node.demand_bits, random8)


def test_duplicate_id_rejected(random8, pto8):
    with pytest.raises(ValueError):
        adjust_for_addition(pto8, SensorNode(1, (0.0, 0.0), 1e6, 100.0), random8)


def test_failure_never_slower(random8, pto8):
    for nid in random8.node_ids[:4]:
        adj = adjust_for_failure(pto8, nid, random8)
        assert adj.action == REMOVED
        assert adj.solution.completion_time <= pto8.completion_time * (1 + 1e-9)
        rep = verify_solution(adj.solution, adj.scenario)
        assert rep.ok, rep.failures
        assert nid not in adj.scenario.node_ids


def test_failure_of_singleton_flight_drops_it():
    sc = small_scenario([(2800.0, 2500.0), (3100.0, 2600.0), (2500.0, 2900.0)])
    sol = pto(sc, PlannerOptions(n_lb=3))
    assert sol.n_flights == 3
    adj = adjust_for_failure(sol, 2, sc)
    assert adj.solution.n_flights == 2
    assert adj.solution.completion_time < sol.completion_time
    assert verify_solution(adj.solution, adj.scenario).ok


def test_unknown_failure_rejected(random8, pto8):
    with pytest.raises(KeyError):
        adjust_for_failure(pto8, 999, random8)


def test_event_sequence(random8, pto8):
    p = _leg_midpoint(pto8, random8)
    events = [
        DynamicEvent.add(SensorNode(200, (float(p[0]), float(p[1])), 1e7, 200.0)),
        DynamicEvent.fail(random8.node_ids[0]),
    ]
    out = apply_events(pto8, events, random8)
    assert [a.action for a in out] == [KEPT, REMOVED]
    final = out[-1]
    assert 200 in final.scenario.node_ids and random8.node_ids[0] not in final.scenario.node_ids
    assert verify_solution(final.solution, final.scenario).ok
