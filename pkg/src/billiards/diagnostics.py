"""Rotation numbers, boundary-band oscillation and trace continuation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._core import kernels
from .billiard_map import PhasePoint, Tangency
from .periodic_orbits import (PARABOLIC_TOL, DegeneratePolygon, NoConvergence, build_orbit,
                              newton_critical)
from .table import NotConvex, SupportFunction, Table


class ContinuationLost(RuntimeError):
    def __init__(self, eps, msg):
        super().__init__(f"continuation lost at eps={eps:.6g}: {msg}")
        self.eps = eps


def _bump_weights(m: int):
    # exp(-1/(t(1-t))) vanishes to all orders at both ends of the window
    t = (np.arange(m) + 0.5) / m
    w = np.exp(-1.0 / (t * (1.0 - t)))
    return w / w.sum()


def _lifted_r(table: Table, x: PhasePoint, n: int):
    th0 = float(table.theta_of_r(x.r))
    thetas, _, count = kernels.orbit(*table.arrays, th0, float(x.s), n)
    if count < n + 1:
        raise Tangency(f"orbit entered the guard band at step {count}", index=count)
    return table.r_of_theta(thetas)


def rotation_number(table: Table, x, n: int = 10_000) -> float:
    """Rotation number in [0, 1) of the orbit of ``x``.

    The per-bounce advance of lifted arc length is averaged over the last
    ``n/2`` bounces with a smooth bump weight, which accelerates convergence
    of the plain Birkhoff average from O(1/n) to faster than any power for
    periodic and quasi-periodic orbits.

    ``x`` may also be the list of points of a periodic orbit; the orbit is
    then followed through its own points instead of being iterated (an
    unstable orbit would drift away from itself under iteration).
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if isinstance(x, PhasePoint):
        adv = np.diff(_lifted_r(table, x, n))
    else:
        r = np.array([p.r for p in x], dtype=float)
        # every bounce advances the lifted angle by less than a full turn
        step = np.mod(np.roll(r, -1) - r, table.perimeter)
        adv = np.resize(step, n)
    adv = adv[n - n // 2:]
    w = _bump_weights(adv.size)
    rho = float(np.dot(w, adv)) / table.perimeter
    return rho % 1.0


def rotation_fluctuation(table: Table, x: PhasePoint, n: int = 100_000) -> tuple:
    """Rotation number at ``n`` and its change relative to ``n/2`` bounces."""
    a = rotation_number(table, x, n)
    b = rotation_number(table, x, n // 2)
    d = abs(a - b)
    return a, min(d, 1.0 - d)


@dataclass
class BandSample:
    r: float
    s: float
    oscillation: float
    s_min: float
    s_max: float
    tangency_at: int | None = None


def lazutkin_band_check(table: Table, band=(0.95, 1.0 - 1e-6), samples: int = 16,
                        n: int = 10_000, seed: int = 0, starts=None):
    """Spread ``sup s - inf s`` along orbits started in an ``s`` band.

    Starts are drawn uniformly in arc length and in ``band`` (or given as
    ``starts``, a list of PhasePoints).  An orbit that reaches the tangency
    guard band is recorded with ``tangency_at`` and its partial spread.
    """
    lo, hi = band
    if not (0.0 < lo < hi < 1.0):
        raise ValueError(f"band {band} must lie in (0, 1)")
    if starts is None:
        rng = np.random.default_rng(seed)
        rs = rng.uniform(0.0, table.perimeter, samples)
        ss = rng.uniform(lo, hi, samples)
        starts = [PhasePoint(float(a), float(b)) for a, b in zip(rs, ss)]
    out = []
    for x in starts:
        th0 = float(table.theta_of_r(x.r))
        _, s, count = kernels.orbit(*table.arrays, th0, float(x.s), n)
        s = s[:count]
        out.append(BandSample(x.r, x.s, float(s.max() - s.min()), float(s.min()), float(s.max()),
                              None if count == n + 1 else int(count)))
    return out


@dataclass
class TraceSample:
    eps: float
    trace: float
    stability: str
    thetas: list
    degenerate: bool


@dataclass
class BifurcationTrace:
    samples: list
    crossings: list = field(default_factory=list)
    degenerate: bool = False

    def to_dict(self):
        return {
            "samples": [{"eps": x.eps, "trace": x.trace, "stability": x.stability,
                         "degenerate": x.degenerate} for x in self.samples],
            "crossings": self.crossings,
            "degenerate_continuum": self.degenerate,
        }


def _crossings(eps, g, tol):
    """Zeros of g = |trace| - 2 along the sweep, with the local slope of |trace|."""
    out = []
    n = len(eps)
    for i in range(n):
        if abs(g[i]) <= tol:
            # sampled on the parabolic band: look at the neighbours
            left = g[i - 1] if i > 0 else None
            right = g[i + 1] if i + 1 < n else None
            if left is not None and right is not None:
                slope = (right - left) / (eps[i + 1] - eps[i - 1])
                kind = "transversal" if left * right < 0 else "touch"
            elif right is not None:
                slope = (right - g[i]) / (eps[i + 1] - eps[i])
                kind = "endpoint"
            elif left is not None:
                slope = (g[i] - left) / (eps[i] - eps[i - 1])
                kind = "endpoint"
            else:
                slope, kind = 0.0, "single_sample"
            out.append({"eps": float(eps[i]), "slope": float(slope),
                        "slope_sign": int(np.sign(slope)), "kind": kind})
        elif i + 1 < n and abs(g[i + 1]) > tol and g[i] * g[i + 1] < 0:
            e0 = eps[i] - g[i] * (eps[i + 1] - eps[i]) / (g[i + 1] - g[i])
            slope = (g[i + 1] - g[i]) / (eps[i + 1] - eps[i])
            out.append({"eps": float(e0), "slope": float(slope),
                        "slope_sign": int(np.sign(slope)), "kind": "transversal"})
    return out


def bifurcation_trace(family: Callable[[float], SupportFunction], eps_values, seed_thetas,
                      winding: int, tol: float = PARABOLIC_TOL) -> BifurcationTrace:
    """Continue a periodic orbit along ``family(eps)`` and sample its trace.

    Each step seeds Newton with the previous solution.  Crossings of
    ``|trace| = 2`` are reported with the sign of ``d|trace|/d eps``; a
    crossing where ``|trace| - 2`` keeps its sign on both sides is a
    ``touch`` (quadratic contact), not a transversal crossing.
    """
    eps_values = [float(e) for e in eps_values]
    th = np.asarray(seed_thetas, dtype=float)
    samples = []
    degenerate = False
    for eps in eps_values:
        try:
            table = Table(family(eps))
        except NotConvex as exc:
            raise ContinuationLost(eps, str(exc)) from exc
        try:
            th = newton_critical(table, th, winding)
            orb = build_orbit(table, th, winding, tol)
        except (NoConvergence, DegeneratePolygon, np.linalg.LinAlgError) as exc:
            raise ContinuationLost(eps, str(exc)) from exc
        if orb.closure_residual > 1e-9:
            raise ContinuationLost(eps, f"closure residual {orb.closure_residual:.3g}")
        degenerate |= orb.degenerate
        samples.append(TraceSample(eps, orb.trace, orb.stability,
                                   [float(t) for t in orb.thetas], orb.degenerate))
    g = np.array([abs(x.trace) - 2.0 for x in samples])
    return BifurcationTrace(samples, _crossings(np.array(eps_values), g, tol), degenerate)
