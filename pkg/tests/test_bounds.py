import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_force_atsp, brute_force_tour
from uavplan.bounds import (
    atsp_symmetric_transform,
    charges_needed,
    charging_lower_bound,
    completion_lower_bound,
    one_tree_bound,
)
from uavplan.physics import leg_time_coefficient
from uavplan.planner import verify_solution


def _sym(n, seed):
    rng = np.random.default_rng(seed)
    p = rng.uniform(0, 1000, (n, 2))
    return np.linalg.norm(p[:, None] - p[None], axis=2)


def test_charges_needed():
    assert charges_needed(2.3e5, 1e5) == 3
    assert charges_needed(2e5, 1e5) == 2
    assert charges_needed(10.0, 1e5) == 1


@pytest.mark.parametrize("seed", range(10))
def test_one_tree_below_optimal_tour(seed):
    w = _sym(8, seed)
    opt = brute_force_tour(w)
    lb = one_tree_bound(w)
    assert lb <= opt * (1 + 1e-9)
    assert lb >= 0.9 * opt


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 500.0))
def test_one_tree_constant_shift(seed, c):
    w = _sym(7, seed)
    shifted = w + c
    np.fill_diagonal(shifted, 0.0)
    np.fill_diagonal(w, 0.0)
    assert one_tree_bound(shifted) == pytest.approx(one_tree_bound(w) + 7 * c, rel=1e-6, abs=1e-6)


def test_one_tree_rejects_asymmetric():
    w = _sym(5, 0)
    w[0, 1] += 1.0
    with pytest.raises(ValueError):
        one_tree_bound(w)


@pytest.mark.parametrize("flights", [1, 2])
def test_transform_preserves_tour_length(flights):
    rng = np.random.default_rng(flights)
    d = rng.uniform(10, 100, (4, 4))
    np.fill_diagonal(d, 0.0)
    S = atsp_symmetric_transform(d, flights)
    n = 3 + flights
    # reference: the depot-expanded asymmetric tour, enumerated directly
    Dp = np.full((n, n), np.inf)
    Dp[:4, :4] = d
    np.fill_diagonal(Dp, np.inf)
    for c in range(4, n):
        Dp[1:4, c] = d[1:, 0]
        Dp[c, 1:4] = d[0, 1:]
    assert brute_force_tour(S) == pytest.approx(brute_force_atsp(Dp))
    assert one_tree_bound(S) <= brute_force_atsp(Dp) * (1 + 1e-9)


def test_completion_bound_below_planner(random8, pto8):
    assert verify_solution(pto8, random8).ok
    lb = completion_lower_bound(random8, pto8)
    assert lb.n_lb == charging_lower_bound(random8)
    assert pto8.n_flights >= lb.n_lb
    assert lb.value <= pto8.completion_time
    coef = leg_time_coefficient(random8)
    assert lb.value == pytest.approx(lb.collection_time + lb.constant_time + coef * lb.route_bound)
