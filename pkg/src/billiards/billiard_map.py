"""The billiard map in (r, s) coordinates.

``r`` is arc length, ``s = sin(phi)`` with ``phi`` the angle between the
outgoing velocity and the inward normal.  ``s > 0`` means the trajectory
advances in the direction of increasing ``r``.

Internally everything runs on lifted boundary angles ``theta``; arc length
is a closed-form function of ``theta`` (see ``table.arclength``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._core import kernels
from .table import TWO_PI, BoundaryPoint, Table

TANGENCY_GUARD = 1.0 - 1e-9


class Tangency(RuntimeError):
    """The state reached the grazing guard band |s| > 1 - 1e-9."""

    def __init__(self, msg, index=None, partial=None):
        super().__init__(msg)
        self.index = index
        self.partial = partial


class SolverFail(RuntimeError):
    pass


@dataclass(frozen=True)
class PhasePoint:
    r: float
    s: float

    def __iter__(self):
        yield self.r
        yield self.s


@dataclass(frozen=True)
class ChordData:
    length: float
    from_point: BoundaryPoint
    to_point: BoundaryPoint
    phi0: float
    phi1: float


class BilliardMap:
    """Vectorized billiard map for one table.

    Methods ending in ``_ts`` take and return lifted ``(theta, s)`` arrays.
    """

    def __init__(self, table: Table):
        self.table = table
        self._arr = table.arrays

    # -- coordinates ---------------------------------------------------
    def to_theta(self, r):
        return self.table.theta_of_r(r)

    def to_r(self, theta):
        return self.table.r_of_theta(theta)

    # -- dynamics ------------------------------------------------------
    def step_ts(self, theta, s):
        """Forward bounce; returns ``(theta1, s1, ok)``."""
        return kernels.step(*self._arr, theta, s)

    def inverse_ts(self, theta, s):
        """Backward bounce via the reversal R(r, s) = (r, -s)."""
        t1, s1, ok = kernels.step(*self._arr, theta, -np.asarray(s, dtype=float))
        # F advances the lift by u in (0, 2pi); the reversed chord goes back by 2pi - u
        return t1 - TWO_PI, -s1, ok

    def iterate_ts(self, theta, s, n: int):
        """Apply F^n (n may be negative) to arrays; NaN where tangency hit."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float)).copy()
        s = np.atleast_1d(np.asarray(s, dtype=float)).copy()
        ok = np.ones(theta.shape, dtype=bool)
        fn = self.step_ts if n >= 0 else self.inverse_ts
        for _ in range(abs(n)):
            idx = np.flatnonzero(ok)
            if idx.size == 0:
                break
            t1, s1, good = fn(theta[idx], s[idx])
            theta[idx] = t1
            s[idx] = s1
            ok[idx[~good]] = False
        theta[~ok] = np.nan
        s[~ok] = np.nan
        return theta, s, ok

    def chord_terms(self, theta0, s0, theta1, s1):
        """Chord length, cos(phi) at both ends and curvatures at both ends."""
        p0 = self.table.position(theta0)
        p1 = self.table.position(theta1)
        ell = np.linalg.norm(p1 - p0, axis=-1)
        c0 = np.sqrt((1.0 - s0) * (1.0 + s0))
        c1 = np.sqrt((1.0 - s1) * (1.0 + s1))
        k0 = 1.0 / self.table.rho(theta0)
        k1 = 1.0 / self.table.rho(theta1)
        return ell, c0, c1, k0, k1

    def jacobian_ts(self, theta, s):
        """DF in (r, s) coordinates at each point, shape (n, 2, 2).

        Assembled from the second derivatives of the chord length
        l(r0, r1):  l_01 = c0 c1 / l,  l_00 = c0^2 / l - k0 c0,
        l_11 = c1^2 / l - k1 c1.
        """
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        s = np.atleast_1d(np.asarray(s, dtype=float))
        t1, s1, ok = self.step_ts(theta, s)
        if not ok.all():
            raise Tangency("jacobian requested inside the tangency guard band")
        ell, c0, c1, k0, k1 = self.chord_terms(theta, s, t1, s1)
        l01 = c0 * c1 / ell
        l00 = c0 * c0 / ell - k0 * c0
        l11 = c1 * c1 / ell - k1 * c1
        J = np.empty(theta.shape + (2, 2))
        J[..., 0, 0] = -l00 / l01
        J[..., 0, 1] = -1.0 / l01
        J[..., 1, 0] = l01 - l11 * l00 / l01
        J[..., 1, 1] = -l11 / l01
        return J

    def twist_ts(self, theta, s):
        """Twist |dr1/ds0| = l / (cos phi0 cos phi1).

        In the orientation used here dr1/ds0 itself is negative; the
        magnitude is the monotone-twist quantity.
        """
        t1, s1, ok = self.step_ts(theta, s)
        ell, c0, c1, _, _ = self.chord_terms(theta, s, t1, s1)
        return ell / (c0 * c1)

    def product_jacobian(self, theta, s, n: int):
        """DF^n along the orbit of one point and the visited states."""
        M = np.eye(2)
        th, sv = float(theta), float(s)
        states = [(th, sv)]
        for _ in range(n):
            J = self.jacobian_ts(np.array([th]), np.array([sv]))[0]
            M = J @ M
            t1, s1, ok = self.step_ts(np.array([th]), np.array([sv]))
            th, sv = float(t1[0]), float(s1[0])
            states.append((th, sv))
        return M, states


def _check_s(s):
    if not abs(s) < TANGENCY_GUARD:
        raise Tangency(f"|s|={abs(s):.12g} inside the tangency guard band")


def step(table: Table, x: PhasePoint):
    """One bounce from ``x``; returns the new phase point and the chord."""
    _check_s(x.s)
    bm = BilliardMap(table)
    th0 = float(bm.to_theta(x.r))
    t1, s1, ok = bm.step_ts(np.array([th0]), np.array([x.s]))
    if not ok[0] or not np.isfinite(t1[0]):
        raise SolverFail("no chord endpoint found")
    th1 = float(t1[0])
    p0 = table.position(th0)
    p1 = table.position(th1)
    chord = ChordData(
        length=float(np.linalg.norm(p1 - p0)),
        from_point=table.boundary_point(th0),
        to_point=table.boundary_point(th1),
        phi0=math.asin(x.s),
        phi1=math.asin(float(s1[0])),
    )
    r1 = float(bm.to_r(th1)) % table.perimeter
    return PhasePoint(r1, float(s1[0])), chord


def jacobian(table: Table, x: PhasePoint) -> np.ndarray:
    _check_s(x.s)
    bm = BilliardMap(table)
    return bm.jacobian_ts(bm.to_theta(np.array([x.r])), np.array([x.s]))[0]


def iterate(table: Table, x: PhasePoint, n: int, cap: int = 10**7):
    """Orbit ``[x, F x, ..., F^n x]``; negative ``n`` iterates F^-1."""
    if abs(n) > cap:
        raise ValueError(f"|n|={abs(n)} exceeds cap {cap}")
    _check_s(x.s)
    bm = BilliardMap(table)
    th0 = float(bm.to_theta(x.r))
    s0 = x.s if n >= 0 else -x.s
    thetas, ss, count = kernels.orbit(*table.arrays, th0, s0, abs(n))
    if n < 0:
        ss = -ss
    P = table.perimeter
    rs = np.mod(bm.to_r(thetas[:count]), P)
    out = [PhasePoint(float(r), float(s)) for r, s in zip(rs, ss[:count])]
    if count < abs(n) + 1:
        raise Tangency(f"orbit entered the guard band at step {count}", index=count, partial=out)
    return out


def twist_defect(table: Table, samples: int = 10_000, seed: int = 0, s_max: float = 0.999):
    """Minimum sampled twist |dr1/ds0| and the point attaining it."""
    rng = np.random.default_rng(seed)
    bm = BilliardMap(table)
    th = rng.uniform(0.0, TWO_PI, samples)
    s = rng.uniform(-s_max, s_max, samples)
    tw = bm.twist_ts(th, s)
    i = int(np.argmin(tw))
    return float(tw[i]), PhasePoint(float(bm.to_r(th[i])), float(s[i]))


def ellipse_focal_invariant(table: Table, a: float, b: float, theta, s):
    """Product of angular momenta about the two foci for chords leaving (theta, s).

    Conserved by the billiard in the ellipse x^2/a^2 + y^2/b^2 <= 1.
    """
    theta = np.asarray(theta, dtype=float)
    s = np.asarray(s, dtype=float)
    c = math.sqrt(a * a - b * b)
    p = table.position(theta)
    t = table.tangent(theta)
    nin = -np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    cphi = np.sqrt((1.0 - s) * (1.0 + s))
    v = cphi[..., None] * nin + s[..., None] * t
    m1 = (p[..., 0] - c) * v[..., 1] - p[..., 1] * v[..., 0]
    m2 = (p[..., 0] + c) * v[..., 1] - p[..., 1] * v[..., 0]
    return m1 * m2
