import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from uavplan import geometry

coord = st.floats(-1000.0, 1000.0)


def test_chord_direction_average_and_reversal():
    np.testing.assert_allclose(geometry.chord_direction([1, 0], [0, 1]), [math.sqrt(0.5)] * 2)
    np.testing.assert_allclose(geometry.chord_direction([1, 0], [-1, 0]), [1, 0])
    with pytest.raises(ValueError):
        geometry.chord_direction([0, 0], [1, 0])


def test_initial_chord_is_diameter_when_segments_allow():
    q = geometry.initial_chord((5.0, 5.0), 100.0, (1, 0), (1, 0), 20, 10.0)
    assert q.shape == (21, 2)
    np.testing.assert_allclose(q[0], [-95.0, 5.0])
    np.testing.assert_allclose(q[-1], [105.0, 5.0])
    np.testing.assert_allclose(np.linalg.norm(np.diff(q, axis=0), axis=1), 10.0)


def test_initial_chord_shortened_to_segment_cap():
    q = geometry.initial_chord((0.0, 0.0), 100.0, (0, 1), (0, 1), 10, 10.0)
    seg = np.linalg.norm(np.diff(q, axis=0), axis=1)
    np.testing.assert_allclose(seg, 10.0)
    np.testing.assert_allclose(np.linalg.norm(q[[0, -1]], axis=1), 100.0)


def test_distance_matrices():
    s = (0.0, 0.0)
    entries = [(1.0, 0.0), (0.0, 2.0)]
    exits = [(3.0, 0.0), (0.0, 5.0)]
    d = geometry.asymmetric_distance_matrix(entries, exits, s)
    assert d[0, 1] == pytest.approx(1.0) and d[1, 0] == pytest.approx(3.0)
    assert d[1, 2] == pytest.approx(math.hypot(3, 2)) and d[2, 1] == pytest.approx(math.hypot(1, 5))
    assert np.all(np.diag(d) == 0)
    sym = geometry.symmetric_distance_matrix(entries, s)
    np.testing.assert_allclose(sym, sym.T)


@settings(max_examples=150, deadline=None)
@given(st.lists(st.tuples(coord, coord), min_size=2, max_size=6), st.tuples(coord, coord))
def test_point_to_polyline_matches_dense_sampling(pts, p):
    poly = np.asarray(pts, float)
    d, idx = geometry.point_to_polyline(p, poly)
    u = np.linspace(0, 1, 2001)
    best = math.inf
    for a, b in zip(poly[:-1], poly[1:]):
        samples = a[None, :] + u[:, None] * (b - a)[None, :]
        best = min(best, float(np.min(np.linalg.norm(samples - np.asarray(p), axis=1))))
    assert d <= best + 1e-9
    seg_len = max(float(np.max(np.linalg.norm(np.diff(poly, axis=0), axis=1))), 1e-9)
    assert best - d <= seg_len / 2000 + 1e-6
    assert 0 <= idx < len(poly) - 1


@settings(max_examples=100, deadline=None)
@given(st.floats(1.0, 500.0), st.floats(0.0, 1.0))
def test_chord_pass(d_th, frac):
    d0 = frac * d_th
    length, t = geometry.chord_pass(d0, d_th, 18.0)
    assert length == pytest.approx(2 * math.sqrt(d_th**2 - d0**2), abs=1e-9)
    assert t == pytest.approx(length / 18.0)


def test_chord_pass_rejects_outside():
    with pytest.raises(ValueError):
        geometry.chord_pass(201.0, 200.0, 18.0)


def test_polyline_length():
    assert geometry.polyline_length([(0, 0), (3, 4), (3, 10)]) == pytest.approx(11.0)
