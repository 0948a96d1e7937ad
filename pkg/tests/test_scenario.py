import dataclasses
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uavplan.scenario import (
    ChannelParams,
    Scenario,
    ScenarioError,
    SensorNode,
    default_segments,
    from_dict,
    generate_random,
    load_scenario,
    save_scenario,
    default_scenario,
    to_dict,
    validate,
)


def test_default_constants():
    sc = default_scenario([(0.0, 0.0)])
    assert sc.uav.altitude == 100.0 and sc.platform.altitude == 15.0
    assert sc.uav.v_fly == 18.0 and sc.uav.v_max == 30.0 and sc.uav.a_max == 5.0
    assert sc.uav.battery_joules == 1e5 and sc.platform.charge_power == 150.0
    assert sc.platform.position == (2500.0, 2500.0)
    assert sc.channel.gamma0 == pytest.approx(1e7, rel=1e-12)  # 0.1 W * 1e-6 / 1e-14
    assert sc.disc.segments_per_sn == 40
    assert validate(sc) == []


def test_gamma0_derived_from_link_budget():
    assert ChannelParams(tx_power=0.2).gamma0 == pytest.approx(2e7)


def test_round_trip_through_file(tmp_path):
    sc = generate_random(6, 5000.0, 1e8, seed=4)
    save_scenario(sc, tmp_path / "s.json")
    back = load_scenario(tmp_path / "s.json")
    assert back == sc


def test_generate_random_deterministic_and_nested():
    a = generate_random(10, 5000.0, 1e8, seed=3)
    b = generate_random(10, 5000.0, 1e8, seed=3)
    c = generate_random(12, 5000.0, 1e8, seed=3)
    assert a == b
    np.testing.assert_array_equal(a.positions(), c.positions()[:10])
    assert np.all((a.positions() >= 0) & (a.positions() <= 5000))
    assert a.platform.position == (2500.0, 2500.0)


@pytest.mark.parametrize(
    "mutate, fragment",
    [
        (lambda d: d["nodes"][0].update(demand_bits=0.0), "demand_bits"),
        (lambda d: d["nodes"][1].update(id=d["nodes"][0]["id"]), "duplicate"),
        (lambda d: d["uav"].update(v_fly=40.0), "v_fly"),
        (lambda d: d["platform"].update(altitude=150.0), "H_C"),
        (lambda d: d["channel"].update(gamma0=5.0), "gamma0"),
        (lambda d: d["discretization"].update(max_segment_len=50.0), "max_segment_len"),
        (lambda d: d["uav"].update(warp=1.0), "unknown keys"),
        (lambda d: d.pop("uav"), "missing"),
    ],
)
def test_invalid_documents_rejected(mutate, fragment):
    d = json.loads(json.dumps(to_dict(generate_random(3, 1000.0, 1e6, seed=0))))
    mutate(d)
    with pytest.raises(ScenarioError, match=fragment):
        from_dict(d)


def test_unparseable_file(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{nope")
    with pytest.raises(ScenarioError):
        load_scenario(p)


def test_node_lookup():
    sc = generate_random(4, 1000.0, 1e6, seed=0)
    assert sc.node(3).id == 3 and sc.index_of(3) == 2
    with pytest.raises(KeyError):
        sc.node(99)


@settings(max_examples=40, deadline=None)
@given(st.floats(1.0, 1000.0))
def test_default_segments_respects_segment_cap(radius):
    m = default_segments(radius)
    assert 20 <= m <= 80
    if radius <= 400.0:
        assert 2 * radius <= m * 10.0 + 1e-9


@settings(max_examples=30, deadline=None)
@given(
    st.lists(st.tuples(st.floats(-1e4, 1e4), st.floats(-1e4, 1e4)), min_size=1, max_size=6),
    st.floats(1e3, 1e9),
    st.floats(10.0, 500.0),
)
def test_document_round_trip_property(points, demand, radius):
    sc = default_scenario(points, demand=demand, coverage_radius=radius)
    assert from_dict(json.loads(json.dumps(to_dict(sc)))) == sc
