"""Robust segment predicates for polyline intersection.

Orientation tests use a floating-point filter and fall back to exact
rational arithmetic when the filter cannot decide the sign.  A zero
orientation is treated as positive, which is a consistent tie-break: every
test that involves the same (line, point) triple returns the same sign, so
shared vertices are never counted twice.
"""
from __future__ import annotations

from fractions import Fraction

import numpy as np

from ._core import kernels

_EPS = 8.0 * np.finfo(float).eps


def _exact_orient(ax, ay, bx, by, cx, cy):
    ax, ay, bx, by, cx, cy = map(Fraction, (ax, ay, bx, by, cx, cy))
    d = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    return 1 if d > 0 else (-1 if d < 0 else 0)


def orient_sign(ax, ay, bx, by, cx, cy):
    """Sign of the orientation determinant, arrays in, int8 array out (0 -> +1)."""
    t1 = (bx - ax) * (cy - ay)
    t2 = (by - ay) * (cx - ax)
    d = t1 - t2
    bound = _EPS * (np.abs(t1) + np.abs(t2))
    out = np.where(d >= 0, 1, -1).astype(np.int8)
    unsure = np.flatnonzero(np.abs(d) <= bound)
    for k in unsure:
        e = _exact_orient(ax[k], ay[k], bx[k], by[k], cx[k], cy[k])
        out[k] = 1 if e >= 0 else -1
    return out


def segments_cross(p0, p1, q0, q1):
    """Vectorized crossing test of segments p0p1 and q0q1 (rows)."""
    o1 = orient_sign(p0[:, 0], p0[:, 1], p1[:, 0], p1[:, 1], q0[:, 0], q0[:, 1])
    o2 = orient_sign(p0[:, 0], p0[:, 1], p1[:, 0], p1[:, 1], q1[:, 0], q1[:, 1])
    o3 = orient_sign(q0[:, 0], q0[:, 1], q1[:, 0], q1[:, 1], p0[:, 0], p0[:, 1])
    o4 = orient_sign(q0[:, 0], q0[:, 1], q1[:, 0], q1[:, 1], p1[:, 0], p1[:, 1])
    return (o1 != o2) & (o3 != o4)


def intersection_params(p0, p1, q0, q1):
    """Parameters (a, b) with p0 + a (p1 - p0) = q0 + b (q1 - q0)."""
    d = p1 - p0
    e = q1 - q0
    w = q0 - p0
    den = d[:, 0] * e[:, 1] - d[:, 1] * e[:, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        a = (w[:, 0] * e[:, 1] - w[:, 1] * e[:, 0]) / den
        b = (w[:, 0] * d[:, 1] - w[:, 1] * d[:, 0]) / den
    return np.clip(np.nan_to_num(a, nan=0.5), 0.0, 1.0), np.clip(np.nan_to_num(b, nan=0.5), 0.0, 1.0)


def segment_angle(d, e):
    """Unsigned angle in [0, pi/2] between the lines spanned by d and e."""
    cr = np.abs(d[..., 0] * e[..., 1] - d[..., 1] * e[..., 0])
    dot = np.abs(np.einsum("...i,...i->...", d, e))
    return np.arctan2(cr, dot)


def candidate_pairs(P, Q):
    """Segment index pairs of polylines P, Q whose bounding boxes overlap."""
    return kernels.bbox_pairs(
        np.ascontiguousarray(P[:-1, 0]), np.ascontiguousarray(P[:-1, 1]),
        np.ascontiguousarray(P[1:, 0]), np.ascontiguousarray(P[1:, 1]),
        np.ascontiguousarray(Q[:-1, 0]), np.ascontiguousarray(Q[:-1, 1]),
        np.ascontiguousarray(Q[1:, 0]), np.ascontiguousarray(Q[1:, 1]))


def crossing_pairs(P, Q, brute: bool = False, chunk: int = 4096):
    """All (i, j) such that segment i of P properly crosses segment j of Q."""
    if len(P) < 2 or len(Q) < 2:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    if brute:
        out_i, out_j = [], []
        m = len(Q) - 1
        for start in range(0, len(P) - 1, max(1, chunk // max(m, 1))):
            ii = np.arange(start, min(start + max(1, chunk // max(m, 1)), len(P) - 1))
            I = np.repeat(ii, m)
            J = np.tile(np.arange(m), ii.size)
            hit = segments_cross(P[I], P[I + 1], Q[J], Q[J + 1])
            out_i.append(I[hit])
            out_j.append(J[hit])
        return np.concatenate(out_i), np.concatenate(out_j)
    I, J = candidate_pairs(P, Q)
    if I.size == 0:
        return I, J
    hit = segments_cross(P[I], P[I + 1], Q[J], Q[J + 1])
    return I[hit], J[hit]
