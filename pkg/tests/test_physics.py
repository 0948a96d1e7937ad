import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uavplan import physics
from uavplan.scenario import UavParams, default_scenario
from uavplan.sca import InCoverageTrajectory, make_cluster

SC = default_scenario([(2600.0, 2500.0)])
UAV = SC.uav


def naive_power(v, u=UAV):
    """Textbook rotary-wing power, written straight from its definition."""
    return (
        u.blade_profile_power * (1 + 3 * v**2 / u.tip_speed**2)
        + u.induced_power * math.sqrt(math.sqrt(1 + v**4 / (4 * u.mean_induced_velocity**4)) - v**2 / (2 * u.mean_induced_velocity**2))
        + 0.5 * u.fuselage_drag_ratio * u.air_density * u.rotor_solidity * u.rotor_disc_area * v**3
    )


def test_hover_power_is_zero_speed_power():
    assert physics.propulsion_power(0.0, UAV) == pytest.approx(UAV.blade_profile_power + UAV.induced_power)
    assert physics.hover_power(UAV) == pytest.approx(168.49)


def test_cruise_power_frozen_value():
    # independent evaluation of the power model at V_f = 18 m/s
    assert physics.propulsion_power(18.0, UAV) == pytest.approx(naive_power(18.0), rel=1e-12)
    assert physics.propulsion_power(18.0, UAV) == pytest.approx(158.97, abs=0.01)


def test_hover_rate_frozen_value():
    expected = 1e6 * math.log2(1 + 1e7 / 100.0**2)
    assert physics.hover_rate(SC) == pytest.approx(expected, rel=1e-12)
    assert physics.hover_rate(SC) == pytest.approx(9.967e6, rel=1e-4)


def test_vertical_transit():
    t, e = physics.vertical_transit(UAV, SC.platform)
    assert t == pytest.approx(2 * 85 / 6)
    pa = 79.86 + 0.5 * 20 * 6 + 0.5 * 20 * math.sqrt(36 + 20 / (2 * 1.225 * 0.503))
    assert e == pytest.approx(pa * t)
    assert physics.takeoff_landing_constant(SC) == pytest.approx(t + e / 150.0)


def test_leg_time_coefficient():
    p = naive_power(18.0)
    assert physics.leg_time_coefficient(SC) == pytest.approx(1 / 18 + p / (150 * 18))


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 60.0))
def test_power_matches_definition(v):
    assert physics.propulsion_power(v, UAV) == pytest.approx(naive_power(v), rel=1e-9)


def test_power_vectorised():
    v = np.linspace(0, 30, 7)
    np.testing.assert_allclose(physics.propulsion_power(v, UAV), [naive_power(x) for x in v], rtol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 5000.0), st.floats(0.0, 5000.0))
def test_rate_decreasing_in_distance(a, b):
    ra = physics.link_rate(a, SC.channel, UAV)
    rb = physics.link_rate(b, SC.channel, UAV)
    if a < b:
        assert ra >= rb
    assert 0 < ra <= physics.hover_rate(SC)


def test_delivered_bits_uses_slot_end_points():
    q = np.array([[2600.0, 2500.0], [2610.0, 2500.0], [2620.0, 2500.0]])
    t = np.array([1.0, 2.0])
    d = np.array([10.0, 20.0])
    expected = float(np.sum(t * 1e6 * np.log2(1 + 1e7 / (1e4 + d**2))))
    assert physics.delivered_bits(q, t, (2600.0, 2500.0), SC) == pytest.approx(expected, rel=1e-12)


def test_cluster_breakdown_by_hand():
    tr = InCoverageTrajectory(1, np.array([[2550.0, 2500.0], [2560.0, 2500.0]]), np.array([1.0]))
    ct = make_cluster([1], [tr], SC)
    b = ct.breakdown
    legs = 50.0 + 60.0
    assert b.t_fly == pytest.approx(legs / 18)
    assert b.e_fly == pytest.approx(naive_power(18.0) * legs / 18)
    assert b.t_com == pytest.approx(1.0)
    assert b.e_com == pytest.approx(naive_power(10.0))
    assert b.e_total == pytest.approx(b.e_com + b.e_fly + b.e_ad)
    assert b.t_chg == pytest.approx(b.e_total / 150.0)
    assert b.t_total == pytest.approx(b.t_com + b.t_fly + b.t_ad + b.t_chg)


def test_transit_piece_counts_as_flight():
    tr = InCoverageTrajectory(1, np.array([[2550.0, 2500.0], [2560.0, 2500.0]]), np.array([1.0]), transit=True)
    b = make_cluster([1], [tr], SC).breakdown
    assert b.t_com == 0.0 and b.e_com == 0.0
    assert b.t_fly == pytest.approx(110.0 / 18 + 1.0)


def test_breakdown_addition():
    a = physics.TimeEnergyBreakdown.from_parts(1, 2, 3, 4, 5, 6, 150.0)
    b = physics.TimeEnergyBreakdown.from_parts(10, 20, 30, 40, 50, 60, 150.0)
    s = physics.total_breakdown([a, b])
    assert s.t_total == pytest.approx(a.t_total + b.t_total)
    assert s.e_total == pytest.approx(165.0)
