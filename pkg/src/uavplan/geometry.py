"""Coverage-disc geometry, chords, distance matrices and point-to-path distances."""
from __future__ import annotations

import math

import numpy as np


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValueError("direction must be nonzero")
    return v / n


def chord_direction(inbound, outbound) -> np.ndarray:
    """Mean of the two unit directions; falls back to inbound when they cancel."""
    a, b = _unit(inbound), _unit(outbound)
    m = a + b
    n = np.linalg.norm(m)
    if n < 1e-9:
        return a
    return m / n


def initial_chord(center, d_th: float, inbound, outbound, M: int, max_segment_len: float | None = None):
    """M-segment straight chord across the coverage disc, oriented along the travel direction.

    The chord is the diameter unless M equal segments of that length would exceed
    ``max_segment_len``; then the chord is shifted sideways until its length is
    ``M * max_segment_len`` (endpoints stay on the boundary).
    """
    if M < 2:
        raise ValueError("M must be >= 2")
    c = np.asarray(center, dtype=float)
    u = chord_direction(inbound, outbound)
    half = d_th
    offset = 0.0
    if max_segment_len is not None and 2.0 * d_th > M * max_segment_len:
        half = 0.5 * M * max_segment_len
        offset = math.sqrt(d_th * d_th - half * half)
    normal = np.array([-u[1], u[0]])
    mid = c + offset * normal
    s = np.linspace(-half, half, M + 1)
    return mid[None, :] + s[:, None] * u[None, :]


def asymmetric_distance_matrix(entries, exits, platform_xy) -> np.ndarray:
    """d[i, j] = ||exit_i - entry_j|| over {platform} + nodes; index 0 is the platform.

    The diagonal carries no meaning and is set to zero.
    """
    s = np.asarray(platform_xy, dtype=float)[None, :]
    ent = np.vstack([s, np.asarray(entries, dtype=float).reshape(-1, 2)])
    ext = np.vstack([s, np.asarray(exits, dtype=float).reshape(-1, 2)])
    d = np.linalg.norm(ext[:, None, :] - ent[None, :, :], axis=2)
    np.fill_diagonal(d, 0.0)
    return d


def symmetric_distance_matrix(points, platform_xy) -> np.ndarray:
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    return asymmetric_distance_matrix(p, p, platform_xy)


def point_to_polyline(point, polyline) -> tuple[float, int]:
    """Exact distance from a point to a polyline and the index of the nearest segment.

    Ties resolve to the lowest segment index.
    """
    p = np.asarray(point, dtype=float)
    pts = np.asarray(polyline, dtype=float)
    if len(pts) < 2:
        raise ValueError("polyline needs at least two points")
    a = pts[:-1]
    b = pts[1:]
    ab = b - a
    L2 = np.einsum("ij,ij->i", ab, ab)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(L2 > 0, np.einsum("ij,ij->i", p - a, ab) / L2, 0.0)
    s = np.clip(s, 0.0, 1.0)
    nearest = a + s[:, None] * ab
    d = np.linalg.norm(nearest - p, axis=1)
    idx = int(np.argmin(d))
    return float(d[idx]), idx


def chord_pass(d0: float, d_th: float, v_f: float) -> tuple[float, float]:
    """Chord length and crossing time for a straight pass at offset d0 from the centre."""
    if d0 < 0 or d0 > d_th:
        raise ValueError(f"offset {d0} outside [0, {d_th}]")
    length = 2.0 * math.sqrt(max(d_th * d_th - d0 * d0, 0.0))
    return length, length / v_f


def polyline_length(polyline) -> float:
    pts = np.asarray(polyline, dtype=float)
    return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))
