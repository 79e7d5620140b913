"""Strictly convex tables described by a Fourier support function.

A table is given by

.. math::
    h(\\theta) = a_0 + \\sum_k a_k \\cos k\\theta + b_k \\sin k\\theta,

with boundary point :math:`\\gamma(\\theta) = h\\,n(\\theta) + h'\\,t(\\theta)`,
:math:`n = (\\cos\\theta, \\sin\\theta)` the outward normal and
:math:`t = (-\\sin\\theta, \\cos\\theta)` the counterclockwise tangent.  The
radius of curvature is :math:`\\rho = h + h''` and
:math:`\\gamma'(\\theta) = \\rho\\, t(\\theta)`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import minimize_scalar

from ._core import kernels

TWO_PI = 2.0 * math.pi


class NotConvex(ValueError):
    """Raised when the curvature radius h + h'' is not positive."""

    def __init__(self, theta, rho):
        super().__init__(f"curvature radius {rho:.6g} <= 0 at theta={theta:.12g}")
        self.theta = float(theta)
        self.rho = float(rho)


@dataclass(frozen=True)
class SupportFunction:
    """Truncated Fourier series of a support function.

    ``harmonics`` is a tuple of ``(k, a_k, b_k)`` with ``k >= 1``.  ``fit_order``
    records the truncation order when the series came from a fit (ellipses).
    """

    a0: float
    harmonics: tuple = ()
    fit_order: int | None = None

    def __post_init__(self):
        hs = []
        for k, a, b in self.harmonics:
            k = int(k)
            if k < 1:
                raise ValueError(f"harmonic index must be >= 1, got {k}")
            a, b = float(a), float(b)
            if not (math.isfinite(a) and math.isfinite(b)):
                raise ValueError(f"non-finite coefficient for harmonic {k}")
            hs.append((k, a, b))
        if not math.isfinite(self.a0):
            raise ValueError("a0 must be finite")
        object.__setattr__(self, "a0", float(self.a0))
        object.__setattr__(self, "harmonics", tuple(hs))

    @property
    def arrays(self):
        """Flat ``(a0, ks, ak, bk)`` tuple consumed by the kernels."""
        ks = np.array([k for k, _, _ in self.harmonics], dtype=np.int64)
        ak = np.array([a for _, a, _ in self.harmonics], dtype=float)
        bk = np.array([b for _, _, b in self.harmonics], dtype=float)
        return self.a0, ks, ak, bk

    def plus(self, other: "SupportFunction", scale: float = 1.0) -> "SupportFunction":
        """Return ``self + scale * other`` with harmonics merged."""
        acc = {}
        for k, a, b in self.harmonics:
            acc[k] = [a, b]
        for k, a, b in other.harmonics:
            cur = acc.setdefault(k, [0.0, 0.0])
            cur[0] += scale * a
            cur[1] += scale * b
        hs = tuple((k, v[0], v[1]) for k, v in sorted(acc.items()))
        return SupportFunction(self.a0 + scale * other.a0, hs, self.fit_order)

    def to_dict(self):
        d = {"a0": self.a0, "harmonics": [list(x) for x in self.harmonics]}
        if self.fit_order is not None:
            d["fit_order"] = self.fit_order
        return d


def circle(radius: float = 1.0) -> SupportFunction:
    return SupportFunction(radius)


def ellipse(a: float, b: float, fit_tol: float = 1e-14, samples: int = 4096) -> SupportFunction:
    """Fourier fit of the ellipse support function sqrt(a^2 cos^2 + b^2 sin^2).

    Harmonics are kept up to the last one whose magnitude exceeds ``fit_tol``.
    """
    th = TWO_PI * np.arange(samples) / samples
    vals = np.sqrt(a * a * np.cos(th) ** 2 + b * b * np.sin(th) ** 2)
    c = np.fft.rfft(vals) / samples
    a0 = c[0].real
    ak = 2.0 * c.real[1:]
    bk = -2.0 * c.imag[1:]
    mags = np.hypot(ak, bk)
    big = np.flatnonzero(mags > fit_tol)
    order = int(big[-1]) + 1 if big.size else 0
    hs = []
    for k in range(1, order + 1):
        # odd harmonics and sine parts vanish by symmetry
        if k % 2 == 0 and abs(ak[k - 1]) > 0.0:
            hs.append((k, float(ak[k - 1]), 0.0))
    return SupportFunction(float(a0), tuple(hs), fit_order=order)


def perturbed_ellipse(a: float, b: float, eps: float, mode: int = 3,
                      kind: str = "cos", fit_tol: float = 1e-14) -> SupportFunction:
    """Ellipse plus ``eps * cos(mode*theta)`` (or ``sin`` for ``kind='sin'``)."""
    if kind == "cos":
        bump = SupportFunction(0.0, ((mode, 1.0, 0.0),))
    elif kind == "sin":
        bump = SupportFunction(0.0, ((mode, 0.0, 1.0),))
    else:
        raise ValueError(f"unknown perturbation kind {kind!r}")
    return ellipse(a, b, fit_tol).plus(bump, eps)


def eval_support_jet(h: SupportFunction, theta):
    """Value and first two derivatives of ``h`` at ``theta``."""
    v, d1, d2, _ = kernels.support_jet(*h.arrays, np.asarray(theta, dtype=float))
    return v, d1, d2


def validate_table(h: SupportFunction, grid: int = 1024) -> float:
    """Check strict convexity; return the minimum curvature radius.

    Grid minima that could be the global minimum (within ten grid cells of
    variation) are polished by bounded scalar minimization, lowest first and
    at most 64 of them.
    """
    if grid < 1024:
        raise ValueError("grid must be >= 1024")
    th = TWO_PI * np.arange(grid) / grid
    v, _, d2, d3 = kernels.support_jet(*h.arrays, th)
    rho = v + d2
    dth = TWO_PI / grid
    slack = 10.0 * dth * float(np.max(np.abs(d3))) + 1e-300
    gmin = float(rho.min())
    is_min = (rho <= np.roll(rho, 1)) & (rho <= np.roll(rho, -1))
    cand = np.flatnonzero(is_min & (rho <= gmin + slack))
    if float(rho.max()) - gmin <= 1e-14 * max(1.0, abs(gmin)):
        cand = cand[:0]         # constant curvature: nothing to polish
    cand = cand[np.argsort(rho[cand], kind="stable")[:64]]
    best_t, best = float(th[int(np.argmin(rho))]), gmin

    def rho_at(t):
        a, _, c, _ = kernels.support_jet(*h.arrays, np.array([t]))
        return float(a[0] + c[0])

    for i in cand:
        res = minimize_scalar(rho_at, bounds=(th[i] - dth, th[i] + dth), method="bounded",
                              options={"xatol": 1e-12})
        if res.fun < best:
            best, best_t = float(res.fun), float(res.x) % TWO_PI
    if best <= 0.0:
        raise NotConvex(best_t, best)
    return best


@dataclass(frozen=True)
class BoundaryPoint:
    theta: float
    position: np.ndarray
    tangent: np.ndarray
    inward_normal: np.ndarray
    curvature_radius: float
    arclength: float


@dataclass(frozen=True)
class ArclengthAtlas:
    """Monotone tables between boundary angle and arc length.

    ``theta_of_r`` interpolates then applies Newton steps on the closed-form
    arc length, so the round trip is exact to rounding.
    """

    h: SupportFunction
    n: int = 4096
    perimeter: float = field(init=False)
    thetas: np.ndarray = field(init=False, repr=False)
    rs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        th = np.linspace(0.0, TWO_PI, self.n + 1)
        object.__setattr__(self, "perimeter", TWO_PI * self.h.a0)
        object.__setattr__(self, "thetas", th)
        object.__setattr__(self, "rs", arclength(self.h, th))

    def r_of_theta(self, theta):
        return arclength(self.h, theta)

    def theta_of_r(self, r, newton: int = 4):
        """Lifted angle with arclength ``r`` (``r`` may be any real)."""
        r = np.asarray(r, dtype=float)
        turns = np.floor(r / self.perimeter)
        rr = r - turns * self.perimeter
        t = np.interp(rr, self.rs, self.thetas)
        for _ in range(newton):
            v, _, d2, _ = kernels.support_jet(*self.h.arrays, t)
            t = t - (arclength(self.h, t) - rr) / (v + d2)
        return t + turns * TWO_PI


def arclength(h: SupportFunction, theta):
    """Arc length from theta=0, closed form of the integral of h + h''.

    Valid for lifted angles: adding 2*pi adds one perimeter.
    """
    theta = np.asarray(theta, dtype=float)
    a0, ks, ak, bk = h.arrays
    out = a0 * theta
    if ks.size:
        kt = np.multiply.outer(theta, ks)
        k = ks.astype(float)
        # int_0^t h = a0 t + sum (a sin kt - b cos kt + b)/k ;  h'(t) - h'(0)
        integ = (ak * np.sin(kt) - bk * (np.cos(kt) - 1.0)) / k
        dh = k * (-ak * np.sin(kt) + bk * (np.cos(kt) - 1.0))
        out = out + (integ + dh).sum(axis=-1)
    return out


class Table:
    """A validated convex table with its arclength atlas."""

    def __init__(self, h: SupportFunction, atlas_n: int = 4096, grid: int = 1024):
        self.h = h
        self.min_curvature_radius = validate_table(h, grid)
        self.atlas = ArclengthAtlas(h, atlas_n)
        self.arrays = h.arrays

    @property
    def perimeter(self) -> float:
        return self.atlas.perimeter

    def jet(self, theta):
        """h, h', h'', h''' at ``theta``."""
        return kernels.support_jet(*self.arrays, np.asarray(theta, dtype=float))

    def rho(self, theta):
        v, _, d2, _ = self.jet(theta)
        return v + d2

    def position(self, theta):
        theta = np.asarray(theta, dtype=float)
        v, d1, _, _ = self.jet(theta)
        c, s = np.cos(theta), np.sin(theta)
        return np.stack([v * c - d1 * s, v * s + d1 * c], axis=-1)

    def tangent(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.stack([-np.sin(theta), np.cos(theta)], axis=-1)

    def r_of_theta(self, theta):
        return arclength(self.h, theta)

    def theta_of_r(self, r):
        return self.atlas.theta_of_r(r)

    def boundary_point(self, theta: float) -> BoundaryPoint:
        theta = float(theta) % TWO_PI
        rho = float(self.rho(theta))
        if rho <= 0.0:
            raise NotConvex(theta, rho)
        c, s = math.cos(theta), math.sin(theta)
        return BoundaryPoint(
            theta=theta,
            position=self.position(theta),
            tangent=np.array([-s, c]),
            inward_normal=np.array([-c, -s]),
            curvature_radius=rho,
            arclength=float(self.r_of_theta(theta)),
        )

    def describe(self):
        return {
            "support_function": self.h.to_dict(),
            "perimeter": self.perimeter,
            "min_curvature_radius": self.min_curvature_radius,
        }

    @cached_property
    def reversal_symmetric_x(self) -> bool:
        """True when h(-theta) = h(theta) (mirror symmetry in the x axis)."""
        return all(abs(b) == 0.0 for _, _, b in self.h.harmonics)


def build_atlas(h: SupportFunction, n: int = 4096) -> ArclengthAtlas:
    validate_table(h)
    return ArclengthAtlas(h, n)


def boundary_point(h: SupportFunction, theta: float) -> BoundaryPoint:
    return Table(h).boundary_point(theta)


def table_from_config(spec: dict) -> Table:
    """Build a table from ``{"a0":..,"harmonics":..}``, ``{"ellipse":..}`` or ``{"circle":..}``."""
    return Table(support_from_config(spec))


def support_from_config(spec: dict) -> SupportFunction:
    if "ellipse" in spec:
        e = spec["ellipse"]
        h = ellipse(e["a"], e["b"], e.get("fit_tol", 1e-14))
        if "perturbation" in spec:
            p = spec["perturbation"]
            if "harmonics" in p:
                bump = SupportFunction(0.0, tuple(tuple(x) for x in p["harmonics"]))
            else:
                m = int(p.get("mode", 3))
                bump = SupportFunction(0.0, ((m, 0.0, 1.0) if p.get("kind", "cos") == "sin" else (m, 1.0, 0.0),))
            h = h.plus(bump, p.get("eps", 1.0))
        return h
    if "circle" in spec:
        return circle(spec["circle"].get("radius", 1.0))
    return SupportFunction(spec["a0"], tuple(tuple(x) for x in spec.get("harmonics", [])))
