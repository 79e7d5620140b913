"""Periodic orbits as critical inscribed polygons.

A period-``q`` orbit with rotation class ``p/q`` is a critical point of the
perimeter ``L(theta_0, ..., theta_{q-1})`` of the inscribed polygon, where
the lifted vertex angles increase by less than ``2 pi`` per step and the
polygon closes with ``theta_q = theta_0 + 2 pi p``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import minimize

from .billiard_map import BilliardMap, PhasePoint
from .table import TWO_PI, Table

PARABOLIC_TOL = 1e-6


class DegeneratePolygon(ValueError):
    pass


class NoConvergence(RuntimeError):
    pass


class WrongRotation(RuntimeError):
    pass


@dataclass(frozen=True)
class SearchRegion:
    """Seeding window for period-``k`` orbits inside the annulus |s| <= s_max."""

    period: int
    angular_cells: int = 24
    s_cells: int = 12

    @property
    def s_max(self) -> float:
        return math.sin((0.5 - 1.0 / self.period) * math.pi)


@dataclass
class PeriodicOrbit:
    thetas: np.ndarray
    phase_points: list
    rotation_class: tuple
    total_length: float
    trace: float
    stability: str
    residue: float
    closure_residual: float
    grad_norm: float
    degenerate: bool = False
    multiplicity: int = 1
    eigenvalues: np.ndarray | None = None
    eigenvectors: np.ndarray | None = None
    orientations: tuple = field(default_factory=tuple)

    @property
    def period(self) -> int:
        return len(self.thetas)

    @property
    def max_abs_s(self) -> float:
        return max(abs(x.s) for x in self.phase_points)

    @property
    def min_abs_s(self) -> float:
        return min(abs(x.s) for x in self.phase_points)

    def csv_row(self):
        p, q = self.rotation_class
        return {
            "period": self.period,
            "rotation": f"{p}/{q}",
            "thetas": " ".join(f"{_wrap(t, TWO_PI):.12f}" for t in self.thetas),
            "abs_s_max": f"{self.max_abs_s:.3e}",
            "trace": f"{self.trace:.12f}",
            "stability": self.stability,
            "residue": f"{self.residue:.12f}",
            "length": f"{self.total_length:.12f}",
            "degenerate": int(self.degenerate),
            "r": " ".join(f"{x.r:.12f}" for x in self.phase_points),
            "s": " ".join(f"{x.s:.12f}" for x in self.phase_points),
        }


def _wrap(x: float, period: float) -> float:
    """``x mod period`` with values rounding up to ``period`` sent to 0."""
    y = x % period
    return 0.0 if period - y < 1e-12 * period else y


def _chord_jets(table: Table, ta, tb):
    """Length of chords a->b with derivatives in the two endpoint angles."""
    ha, ha1, ha2, ha3 = table.jet(ta)
    hb, hb1, hb2, hb3 = table.jet(tb)
    pa = table.position(ta)
    pb = table.position(tb)
    d = pb - pa
    ell = np.linalg.norm(d, axis=-1)
    if np.any(ell < 1e-12):
        raise DegeneratePolygon("two consecutive vertices coincide")
    e = d / ell[:, None]

    def derivs(t, v, v1, v2, v3):
        tan = np.stack([-np.sin(t), np.cos(t)], axis=-1)
        nor = np.stack([np.cos(t), np.sin(t)], axis=-1)
        rho = v + v2
        drho = v1 + v3
        g1 = rho[:, None] * tan
        g2 = drho[:, None] * tan - rho[:, None] * nor
        return g1, g2

    ga1, ga2 = derivs(ta, ha, ha1, ha2, ha3)
    gb1, gb2 = derivs(tb, hb, hb1, hb2, hb3)
    eb = np.einsum("ij,ij->i", e, gb1)
    ea = np.einsum("ij,ij->i", e, ga1)
    l_b = eb
    l_a = -ea
    l_bb = (np.einsum("ij,ij->i", gb1, gb1) - eb * eb) / ell + np.einsum("ij,ij->i", e, gb2)
    l_aa = (np.einsum("ij,ij->i", ga1, ga1) - ea * ea) / ell - np.einsum("ij,ij->i", e, ga2)
    l_ab = -(np.einsum("ij,ij->i", ga1, gb1) - ea * eb) / ell
    return ell, l_a, l_b, l_aa, l_bb, l_ab


def length_jet(table: Table, thetas, winding: int):
    """Perimeter of the inscribed polygon with its gradient and Hessian."""
    th = np.asarray(thetas, dtype=float)
    k = th.size
    nxt = np.append(th[1:], th[0] + TWO_PI * winding)
    ell, l_a, l_b, l_aa, l_bb, l_ab = _chord_jets(table, th, nxt)
    g = np.zeros(k)
    H = np.zeros((k, k))
    idx = np.arange(k)
    j = (idx + 1) % k
    np.add.at(g, idx, l_a)
    np.add.at(g, j, l_b)
    np.add.at(H, (idx, idx), l_aa)
    np.add.at(H, (j, j), l_bb)
    np.add.at(H, (idx, j), l_ab)
    np.add.at(H, (j, idx), l_ab)
    return float(ell.sum()), g, H


def _valid(th, winding):
    nxt = np.append(th[1:], th[0] + TWO_PI * winding)
    d = nxt - th
    return bool(np.all(d > 1e-9) and np.all(d < TWO_PI - 1e-9))


def newton_critical(table: Table, thetas, winding: int, tol: float = 1e-11, max_iter: int = 60):
    """Newton iteration on the length gradient with backtracking on |grad|."""
    th = np.array(thetas, dtype=float)
    if not _valid(th, winding):
        raise NoConvergence("seed is not an admissible polygon")
    L, g, H = length_jet(table, th, winding)
    gn = np.linalg.norm(g)
    for _ in range(max_iter):
        if gn < tol:
            return th
        dx = np.linalg.lstsq(H, -g, rcond=1e-13)[0]
        a = 1.0
        while a > 1e-6:
            cand = th + a * dx
            if _valid(cand, winding):
                try:
                    _, gc, Hc = length_jet(table, cand, winding)
                except DegeneratePolygon:
                    gc = None
                if gc is not None and np.linalg.norm(gc) < (1.0 - 1e-4 * a) * gn:
                    break
            a *= 0.5
        else:
            break
        th, g, H = cand, gc, Hc
        gn = np.linalg.norm(g)
    if gn < tol * 10:
        return th
    raise NoConvergence(f"gradient norm {gn:.3e} after Newton")


def _ascend(table: Table, thetas, winding: int):
    """Local maximum of the perimeter from ``thetas`` (Birkhoff max orbit)."""

    def fun(x):
        if not _valid(x, winding):
            return 1e6, np.zeros_like(x)
        L, g, _ = length_jet(table, x, winding)
        return -L, -g

    def hess(x):
        return -length_jet(table, x, winding)[2]

    res = minimize(fun, np.asarray(thetas, dtype=float), jac=True, hess=hess,
                   method="trust-exact", options={"gtol": 1e-12, "maxiter": 500})
    return res.x


def orbit_phase_points(table: Table, thetas):
    """Departure states (r, s) at each vertex of a closed polygon."""
    th = np.asarray(thetas, dtype=float)
    pos = table.position(th)
    nxt = np.roll(pos, -1, axis=0)
    e = nxt - pos
    e /= np.linalg.norm(e, axis=1)[:, None]
    s = np.einsum("ij,ij->i", e, table.tangent(th))
    return th, s


def classify_states(bm: BilliardMap, thetas, s, tol: float = PARABOLIC_TOL):
    """Trace of DF^k along the states and the induced stability label."""
    J = bm.jacobian_ts(thetas, s)
    M = np.eye(2)
    for Ji in J:
        M = Ji @ M
    tr = float(np.trace(M))
    at = abs(tr)
    if at > 2.0 + tol:
        stab = "hyperbolic"
    elif at < 2.0 - tol:
        stab = "elliptic"
    else:
        stab = "parabolic"
    return tr, stab, M


def build_orbit(table: Table, thetas, winding: int, tol: float = PARABOLIC_TOL) -> PeriodicOrbit:
    th = np.asarray(thetas, dtype=float)
    k = th.size
    bm = BilliardMap(table)
    th, s = orbit_phase_points(table, th)
    L, g, H = length_jet(table, th, winding)
    t1, s1, ok = bm.step_ts(th, s)
    # closure: F maps vertex i to vertex i+1 (lifted, up to whole turns)
    nxt_t = np.append(th[1:], th[0] + TWO_PI * winding)
    dt = t1 - nxt_t
    dt -= TWO_PI * np.round(dt / TWO_PI)
    ds = s1 - np.roll(s, -1)
    closure = float(np.max(np.hypot(dt * table.rho(th), ds)))
    tr, stab, M = classify_states(bm, th, s, tol)
    frac = Fraction(winding, k)
    p, q = frac.numerator, frac.denominator
    ev = eigvec = None
    if stab == "hyperbolic":
        ev, eigvec = np.linalg.eig(M)
        order = np.argsort(-np.abs(ev))
        ev, eigvec = ev[order].real, eigvec[:, order].real
    eig = np.linalg.eigvalsh(0.5 * (H + H.T))
    degenerate = bool(np.min(np.abs(eig)) < 1e-8 * max(1.0, np.max(np.abs(eig))))
    P = table.perimeter
    pts = [PhasePoint(_wrap(float(table.r_of_theta(t)), P), float(x)) for t, x in zip(th, s)]
    return PeriodicOrbit(
        thetas=th, phase_points=pts, rotation_class=(p, q), total_length=L, trace=tr,
        stability=stab, residue=(2.0 - tr) / 4.0, closure_residual=closure,
        grad_norm=float(np.linalg.norm(g)), degenerate=degenerate,
        eigenvalues=ev, eigenvectors=eigvec,
        orientations=(f"{p}/{q}", f"{q - p}/{q}") if q > 2 else (f"{p}/{q}",),
    )


def find_orbit(table: Table, rotation_class, seed=None, mode: str = "newton",
               tol: float = PARABOLIC_TOL) -> PeriodicOrbit:
    """Periodic orbit of class ``p/q`` from a seed polygon of ``q`` lifted angles.

    ``mode='max'`` first ascends the perimeter to a local maximum.
    """
    p, q = rotation_class
    if seed is None:
        seed = TWO_PI * p * np.arange(q) / q
    seed = np.asarray(seed, dtype=float)
    if seed.size != q:
        raise ValueError("seed must have q angles")
    if mode == "max":
        seed = _ascend(table, seed, p)
    elif mode != "newton":
        raise ValueError(f"unknown mode {mode!r}")
    th = newton_critical(table, seed, p)
    orb = build_orbit(table, th, p, tol)
    if Fraction(p, q) != Fraction(*orb.rotation_class):
        raise WrongRotation(f"converged to {orb.rotation_class}")
    if len(np.unique(np.round(np.mod(th, TWO_PI), 9))) < q:
        raise WrongRotation("converged to a multiply covered orbit")
    return orb


def classify(table: Table, orbit: PeriodicOrbit, tol: float = PARABOLIC_TOL) -> PeriodicOrbit:
    """Recompute trace/stability/residue (and eigen-data) for ``orbit``."""
    return build_orbit(table, orbit.thetas, orbit.rotation_class[0] * orbit.period // orbit.rotation_class[1], tol)


def same_orbit(a: PeriodicOrbit, b: PeriodicOrbit, tol: float = 1e-7) -> bool:
    """Equality of boundary point sets (cyclic shifts and time reversal)."""
    if a.period != b.period:
        return False
    x = np.sort(np.mod(a.thetas, TWO_PI))
    y = np.sort(np.mod(b.thetas, TWO_PI))
    for j in range(a.period):
        d = x - np.roll(y, j)
        d = (d + math.pi) % TWO_PI - math.pi
        if np.max(np.abs(d)) < tol:
            return True
    return False


def _coprime_windings(k):
    return [p for p in range(1, k) if math.gcd(p, k) == 1]


def enumerate_orbits(table: Table, max_period: int, angular_cells: int = 24, s_cells: int = 12,
                     seed: int = 0, cap: int = 12, tol: float = PARABOLIC_TOL):
    """Best-effort list of periodic orbits of period 1..max_period.

    Seeds come from a jittered grid over the annulus |s| <= sin((1/2-1/k) pi)
    (pushed around by the map to get a polygon) and from regular polygons of
    each rotation class.  Orbits are deduplicated up to cyclic shift and time
    reversal; degenerate continua keep one representative per class.
    """
    if max_period > cap:
        raise ValueError(f"max_period {max_period} exceeds cap {cap}")
    rng = np.random.default_rng(seed)
    bm = BilliardMap(table)
    found = []
    for k in range(2, max_period + 1):
        reg = SearchRegion(k, angular_cells, s_cells)
        windings = _coprime_windings(k)
        seeds = []
        for p in windings:
            if 2 * p > k:
                continue  # reversal of class (k-p)/k
            for i in range(angular_cells):
                t0 = TWO_PI * (i + rng.uniform()) / angular_cells
                seeds.append((p, t0 + TWO_PI * p * np.arange(k) / k))
        th0 = TWO_PI * (np.repeat(np.arange(angular_cells), s_cells) + rng.uniform(size=angular_cells * s_cells)) / angular_cells
        sg = (np.tile(np.arange(s_cells), angular_cells) + rng.uniform(size=angular_cells * s_cells)) / s_cells
        s0 = reg.s_max * (2.0 * sg - 1.0)
        ths = [th0]
        th, sv = th0, s0
        for _ in range(k):
            th, sv, _ = bm.step_ts(th, sv)
            ths.append(th)
        ths = np.array(ths)
        for col in range(ths.shape[1]):
            poly = ths[:, col]
            if not np.all(np.isfinite(poly)):
                continue
            w = int(round((poly[k] - poly[0]) / TWO_PI))
            if w in windings:
                seeds.append((w, poly[:k]))
        for w, sd in seeds:
            try:
                th = newton_critical(table, sd, w)
                orb = build_orbit(table, th, w, tol)
            except (NoConvergence, DegeneratePolygon, np.linalg.LinAlgError):
                continue
            if orb.closure_residual > 1e-9 or orb.grad_norm > 1e-10:
                continue
            if len(np.unique(np.round(np.mod(th, TWO_PI), 9))) < k:
                continue
            if 2 * w > k:
                try:
                    orb = build_orbit(table, _reverse_lift(th), k - w, tol)
                except (NoConvergence, DegeneratePolygon, np.linalg.LinAlgError):
                    continue
            _merge(found, orb)
    return found


def _reverse_lift(thetas):
    """The same polygon traversed backwards, lifted with increasing angles."""
    r = np.mod(np.asarray(thetas, dtype=float)[::-1], TWO_PI)
    inc = np.mod(np.diff(r), TWO_PI)
    return np.concatenate([[r[0]], r[0] + np.cumsum(inc)])


def _merge(found, orb):
    for i, other in enumerate(found):
        if other.degenerate and orb.degenerate and other.period == orb.period and \
                Fraction(*other.rotation_class) in (Fraction(*orb.rotation_class),
                                                    1 - Fraction(*orb.rotation_class)):
            other.multiplicity += 1
            return
        if same_orbit(other, orb):
            return
    found.append(orb)


def mirror_trace(ell: float, rho1: float, rho2: float) -> float:
    """Trace of DF^2 for a 2-orbit from geometric optics (mirror equation)."""
    u1, u2 = ell / rho1, ell / rho2
    return 2.0 - 4.0 * (u1 + u2) + 4.0 * u1 * u2
