"""Invariant-manifold branches of hyperbolic periodic orbits.

Branches are grown under ``f = F^(2n)`` for a period-``n`` orbit so that each
of the four branches at every orbit point is individually invariant.  A
branch is parametrized by ``tau = g + t``: the node at ``tau`` is
``f^g(seg(t))`` where ``seg(t) = base + delta * lam**t * e`` is the linear
fundamental segment.  New nodes are always computed from the seed segment,
never interpolated, so they lie on the manifold up to the seeding error.
Stable branches use ``f^-1`` in place of ``f``.

Phase-space coordinates are lifted: ``r`` is not reduced modulo the
perimeter, which keeps branches continuous.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .billiard_map import BilliardMap
from .periodic_orbits import PeriodicOrbit
from .table import TWO_PI, Table

KINDS = ("unstable+", "stable+", "unstable-", "stable-")
H_MAX = 1e-3
ALPHA_MAX = 0.2


class NotHyperbolic(ValueError):
    pass


class Inconclusive(RuntimeError):
    pass


@dataclass
class Budget:
    max_generations: int = 60
    max_cum_length: float = 20.0

    def doubled(self) -> "Budget":
        return Budget(self.max_generations, 2.0 * self.max_cum_length)


@dataclass
class HyperbolicFixture:
    """Linear data of ``f = F^(2n)`` at one point of a hyperbolic orbit."""

    table: Table
    orbit: PeriodicOrbit
    index: int
    base_theta: float
    base_s: float
    base: np.ndarray            # lifted (r, s)
    multiplier: float           # |eigenvalue| of DF^n, > 1
    lam: float                  # eigenvalue of DF^(2n), = multiplier**2
    e_u: np.ndarray
    e_s: np.ndarray
    power: int                  # number of billiard bounces in f
    lift_turns: int             # f advances the lifted angle by 2 pi * lift_turns
    bm: BilliardMap = field(repr=False, default=None)

    # -- the map f and its inverse on lifted (theta, s) ------------------
    def f_ts(self, theta, s, inverse: bool = False):
        sign = -1 if inverse else 1
        th, sv, ok = self.bm.iterate_ts(theta, s, sign * self.power)
        return th - sign * TWO_PI * self.lift_turns, sv, ok

    def to_rs(self, theta, s):
        return np.stack([self.bm.to_r(theta), s], axis=-1)

    def to_ts(self, pts):
        pts = np.atleast_2d(pts)
        return self.bm.to_theta(pts[:, 0]), pts[:, 1]

    def f(self, pts, inverse: bool = False):
        """Apply f (or f^-1) to lifted (r, s) points."""
        th, s = self.to_ts(pts)
        th1, s1, ok = self.f_ts(th, s, inverse)
        return self.to_rs(th1, s1), ok

    def eigen_coords(self, pts):
        """Coordinates (x, y) of ``pts - base`` in the basis (e_u, e_s)."""
        B = np.column_stack([self.e_u, self.e_s])
        return np.linalg.solve(B, (np.atleast_2d(pts) - self.base).T).T

    def quadrant(self, x, y):
        """Quadrant label 1..4 counterclockwise from (unstable+, stable+)."""
        if x >= 0 and y >= 0:
            return 1
        if x < 0 and y >= 0:
            return 2
        if x < 0:
            return 3
        return 4

    def direction(self, kind: str) -> np.ndarray:
        v = self.e_u if kind.startswith("unstable") else self.e_s
        return v if kind.endswith("+") else -v


def _orient(v):
    v = v / np.linalg.norm(v)
    if abs(v[0]) > 1e-12:
        return v if v[0] > 0 else -v
    return v if v[1] > 0 else -v


def linearize(table: Table, orbit: PeriodicOrbit, index: int = 0) -> HyperbolicFixture:
    """Eigen-data of DF^(2n) at orbit point ``index``.

    Branch orientations are transported from point 0 by DF^index so that
    labels are consistent along the orbit; (e_u, e_s) is positively oriented
    at point 0.
    """
    if orbit.stability != "hyperbolic":
        raise NotHyperbolic(f"orbit is {orbit.stability} (trace {orbit.trace:.6g})")
    bm = BilliardMap(table)
    n = orbit.period
    th0 = np.asarray(orbit.thetas, dtype=float)
    s0 = np.array([p.s for p in orbit.phase_points])
    Mn, states = bm.product_jacobian(th0[0], s0[0], n)
    ev, vec = np.linalg.eig(Mn)
    ev = ev.real
    vec = vec.real
    iu = int(np.argmax(np.abs(ev)))
    is_ = 1 - iu
    e_u = _orient(vec[:, iu])
    e_s = vec[:, is_] / np.linalg.norm(vec[:, is_])
    if e_u[0] * e_s[1] - e_u[1] * e_s[0] < 0:
        e_s = -e_s
    # transport to the requested orbit point
    if index:
        Mj, _ = bm.product_jacobian(th0[0], s0[0], index)
        e_u = Mj @ e_u
        e_s = Mj @ e_s
        e_u /= np.linalg.norm(e_u)
        e_s /= np.linalg.norm(e_s)
    th_b, s_b = states[index]
    mult = float(abs(ev[iu]))
    if not mult > 1.0 + 1e-6:
        raise NotHyperbolic(f"multiplier {mult:.12g} too close to 1")
    ang = math.acos(min(1.0, abs(float(e_u @ e_s))))
    if ang < 1e-4:
        raise NotHyperbolic("eigen-directions nearly parallel")
    power = 2 * n
    thf, _, _ = bm.iterate_ts(np.array([th_b]), np.array([s_b]), power)
    turns = int(round((thf[0] - th_b) / TWO_PI))
    base = np.array([float(bm.to_r(th_b)), s_b])
    return HyperbolicFixture(table, orbit, index, th_b, s_b, base, mult, mult * mult,
                             e_u, e_s, power, turns, bm)


def orbit_fixtures(table: Table, orbit: PeriodicOrbit):
    return [linearize(table, orbit, j) for j in range(orbit.period)]


@dataclass
class ManifoldBranch:
    kind: str
    fixture: HyperbolicFixture = field(repr=False)
    delta: float
    tau: np.ndarray
    points: np.ndarray           # (N, 2) lifted (r, s)
    cum_length: np.ndarray
    generations: int
    status: str                  # "budget" | "generations" | "tangency" | "unresolved"

    @property
    def stable(self) -> bool:
        return self.kind.startswith("stable")

    @property
    def total_length(self) -> float:
        return float(self.cum_length[-1])

    def node_generation(self):
        """Generation of each node; the base point counts as generation 0."""
        t = np.where(np.isfinite(self.tau), self.tau, 0.0)
        return np.floor(t).astype(int)

    def jsonl_records(self):
        P = self.fixture.table.perimeter
        label = f"{self.kind}@{self.fixture.index}"
        for g, (r, s), c in zip(self.node_generation(), self.points, self.cum_length):
            yield {"branch": label, "generation": int(g), "r": float(r % P), "s": float(s),
                   "cum_length": float(c)}


def _seed_delta(fx: HyperbolicFixture, e, inverse, tol=1e-10, start=1e-3):
    """Largest delta (by halving) whose linearization residual is below ``tol``."""
    delta = start
    for _ in range(80):
        x = fx.base + delta * e
        img, ok = fx.f(x[None, :], inverse)
        pred = fx.base + fx.lam * delta * e
        if ok[0] and np.linalg.norm(img[0] - pred) < tol:
            return delta
        delta *= 0.5
    raise RuntimeError("could not find a seed offset in the linear regime")


class _Evaluator:
    """Exact node evaluation tau -> f^floor(tau)(seg(frac(tau)))."""

    def __init__(self, fx: HyperbolicFixture, e, delta, inverse):
        self.fx = fx
        self.e = e
        self.delta = delta
        self.inverse = inverse

    def seg(self, t):
        t = np.asarray(t, dtype=float)
        return self.fx.base + (self.delta * self.fx.lam ** t)[:, None] * self.e

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        g = np.floor(tau).astype(int)
        t = tau - g
        pts = self.seg(t)
        th, s = self.fx.to_ts(pts)
        ok = np.ones(tau.shape, dtype=bool)
        for k in range(1, int(g.max(initial=0)) + 1):
            idx = np.flatnonzero((g >= k) & ok)
            if idx.size == 0:
                break
            t1, s1, good = self.fx.f_ts(th[idx], s[idx], self.inverse)
            th[idx] = t1
            s[idx] = s1
            ok[idx[~good]] = False
        out = self.fx.to_rs(th, s)
        out[~ok] = np.nan
        return out, ok


def _turning(p):
    d = np.diff(p, axis=0)
    a = np.arctan2(d[:, 1], d[:, 0])
    da = np.abs(np.diff(a))
    return np.minimum(da, TWO_PI - da)


def _refine(ev, tau, pts, h_max, alpha_max, min_dtau=1e-10, h_floor=1e-7,
            max_nodes=200_000):
    """Insert nodes until gap <= h_max and turning <= alpha_max.

    Turning angles are only enforced between segments longer than
    ``h_floor``; below that the direction is dominated by rounding.
    Returns ``(tau, pts, cut)`` where ``cut`` is the index of the first
    interval that could not be resolved (above ``min_dtau`` spacing or the
    node cap), or None.
    """
    for _ in range(100):
        gaps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        bad = gaps > h_max
        if len(pts) > 2:
            turn = _turning(pts)
            long_ = (gaps[:-1] > h_floor) & (gaps[1:] > h_floor)
            tb = np.flatnonzero((turn > alpha_max) & long_)
            bad[tb] = True
            bad[tb + 1] = True
        stuck = bad & (np.diff(tau) <= min_dtau)
        if stuck.any():
            return tau, pts, int(np.flatnonzero(stuck)[0])
        idx = np.flatnonzero(bad)
        if idx.size == 0:
            return tau, pts, None
        if len(tau) + idx.size > max_nodes:
            return tau, pts, int(idx[0])
        mids = 0.5 * (tau[idx] + tau[idx + 1])
        new, ok = ev(mids)
        if not ok.all():
            # nodes past a tangency are unusable; cut there
            first = int(idx[np.flatnonzero(~ok)[0]])
            tau, pts = tau[: first + 1], pts[: first + 1]
            ev.tangency = True
            continue
        tau = np.insert(tau, idx + 1, mids)
        pts = np.insert(pts, idx + 1, new, axis=0)
    return tau, pts, 0


def seed_and_grow(fx: HyperbolicFixture, kind: str, budget: Budget | None = None,
                  h_max: float = H_MAX, alpha_max: float = ALPHA_MAX,
                  nodes_per_domain: int = 16, max_nodes: int = 200_000) -> ManifoldBranch:
    """Grow one branch by mapping fundamental domains until the budget is spent.

    Growth stops at the generation budget, the length budget, a tangency, or
    when refinement can no longer resolve the curve (``status='unresolved'``:
    either the node cap is reached, or the branch lands exactly on another
    saddle's stable manifold and rounding decides which way it leaves).  In
    the last case the branch is cut at the first unresolved interval.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown branch kind {kind!r}")
    budget = budget or Budget()
    inverse = kind.startswith("stable")
    e = fx.direction(kind)
    delta = _seed_delta(fx, e, inverse)
    ev = _Evaluator(fx, e, delta, inverse)
    ev.tangency = False

    tau = np.linspace(0.0, 1.0, nodes_per_domain + 1)
    pts, _ = ev(tau)
    tau, pts, cut = _refine(ev, tau, pts, h_max, alpha_max, max_nodes=max_nodes)
    all_tau = [tau]
    all_pts = [pts]
    total = float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())
    status = "generations"
    gens = 0
    prev_tau, prev_pts = tau, pts
    for g in range(1, budget.max_generations + 1):
        if total >= budget.max_cum_length:
            status = "budget"
            break
        img, ok = fx.f(prev_pts, inverse)
        t_new = prev_tau + 1.0
        if not ok.all():
            k = int(np.flatnonzero(~ok)[0])
            img, t_new = img[:k], t_new[:k]
            ev.tangency = True
        if len(t_new) < 2:
            status = "tangency"
            break
        t_new, img, cut = _refine(ev, t_new, img, h_max, alpha_max, max_nodes=max_nodes)
        if cut is not None:
            t_new, img = t_new[: cut + 1], img[: cut + 1]
        # the first node repeats the previous generation's last node
        all_tau.append(t_new[1:])
        all_pts.append(img[1:])
        total += float(np.linalg.norm(np.diff(img, axis=0), axis=1).sum())
        gens = g
        prev_tau, prev_pts = t_new, img
        if cut is not None:
            status = "unresolved"
            break
        if ev.tangency:
            status = "tangency"
            break
    tau = np.concatenate(all_tau)
    pts = np.concatenate(all_pts)
    cum = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))])
    if cum[-1] > budget.max_cum_length:
        # keep the first node past the budget so the branch covers it
        last = int(np.searchsorted(cum, budget.max_cum_length)) + 1
        tau, pts, cum = tau[:last], pts[:last], cum[:last]
        status = "budget"
    # prepend the base point itself (tau = -inf)
    tau = np.concatenate([[-np.inf], tau])
    pts = np.vstack([fx.base, pts])
    cum = np.concatenate([[0.0], cum + np.linalg.norm(pts[1] - pts[0])])
    return ManifoldBranch(kind, fx, delta, tau, pts, cum, gens, status)


def grow_all(fx: HyperbolicFixture, budget: Budget | None = None, **kw):
    return {k: seed_and_grow(fx, k, budget, **kw) for k in KINDS}


def evaluator(branch: ManifoldBranch) -> _Evaluator:
    fx = branch.fixture
    return _Evaluator(fx, fx.direction(branch.kind), branch.delta, branch.stable)


def point_to_polyline(pts, poly, k: int = 8):
    """Distance from each point to the polyline and the nearest segment index."""
    pts = np.atleast_2d(pts)
    tree = cKDTree(poly)
    kk = min(k, len(poly))
    _, nn = tree.query(pts, k=kk)
    nn = np.atleast_2d(nn)
    if kk == 1:
        nn = nn.T
    best = np.full(len(pts), np.inf)
    best_seg = np.zeros(len(pts), dtype=int)
    nseg = len(poly) - 1
    for col in range(nn.shape[1]):
        for off in (-1, 0):
            seg = np.clip(nn[:, col] + off, 0, nseg - 1)
            a = poly[seg]
            b = poly[seg + 1]
            ab = b - a
            L2 = np.einsum("ij,ij->i", ab, ab)
            t = np.clip(np.einsum("ij,ij->i", pts - a, ab) / np.where(L2 > 0, L2, 1.0), 0.0, 1.0)
            d = np.linalg.norm(a + t[:, None] * ab - pts, axis=1)
            better = d < best
            best[better] = d[better]
            best_seg[better] = seg[better]
    return best, best_seg


def invariance_error(branch: ManifoldBranch) -> float:
    """max distance from f(node) to the branch, over nodes whose image lies inside it."""
    fx = branch.fixture
    gen = branch.node_generation()
    sel = np.flatnonzero((gen < branch.generations) & np.isfinite(branch.tau))
    sel = sel[branch.tau[sel] + 1.0 <= branch.tau[-1]]
    if sel.size == 0:
        return 0.0
    img, ok = fx.f(branch.points[sel], branch.stable)
    d, _ = point_to_polyline(img[ok], branch.points)
    return float(d.max()) if d.size else 0.0


def domain_diameters(branch: ManifoldBranch):
    """Diameter of each fundamental domain [g, g+1] along the branch."""
    tau = branch.tau
    out = []
    for g in range(branch.generations + 1):
        m = (tau >= g) & (tau <= g + 1)
        if m.sum() < 2:
            break
        p = branch.points[m]
        out.append(float(np.max(np.linalg.norm(p - p[0], axis=1))))
    return out


@dataclass
class RecurrenceReport:
    per_generation: list
    minimum: float
    argmin_generation: int | None
    reference_tau: float


def recurrence_diagnostic(branch: ManifoldBranch, ref_tau: float = 0.0,
                          gap: float = 2.0) -> RecurrenceReport:
    """Closest return of late parts of a branch to a reference fundamental domain.

    The reference domain is ``tau in [ref_tau, ref_tau + 1]`` (by default the
    initial fundamental domain).  Nodes with ``tau >= ref_tau + gap`` are the
    late part; ``gap = 2`` skips the image of the domain, which touches it.
    Distances are reported per generation counted from ``ref_tau``.
    """
    tmax = branch.tau[-1]
    if not tmax >= ref_tau + gap:
        raise ValueError(f"branch reaches tau={tmax:.3g}; need at least {ref_tau + gap:.3g}")
    ref = branch.points[(branch.tau >= ref_tau) & (branch.tau <= ref_tau + 1.0)]
    later = branch.tau >= ref_tau + gap
    # the branch lives on the lifted cylinder: bring late nodes next to the reference
    P = branch.fixture.table.perimeter
    pts = branch.points[later].copy()
    c = ref[:, 0].mean()
    pts[:, 0] = c + np.mod(pts[:, 0] - c + 0.5 * P, P) - 0.5 * P
    d, _ = point_to_polyline(pts, ref)
    gens = np.floor(branch.tau[later] - ref_tau).astype(int)
    per = [(int(g), float(d[gens == g].min())) for g in np.unique(gens)]
    i = int(np.argmin([x[1] for x in per]))
    return RecurrenceReport(per, per[i][1], per[i][0], float(ref_tau))


def perimeter_shifts(U: np.ndarray, S: np.ndarray, P: float):
    lo_u, hi_u = U[:, 0].min(), U[:, 0].max()
    lo_s, hi_s = S[:, 0].min(), S[:, 0].max()
    m0 = math.floor((lo_u - hi_s) / P)
    m1 = math.ceil((hi_u - lo_s) / P)
    return [m for m in range(m0, m1 + 1)
            if lo_s + m * P <= hi_u and hi_s + m * P >= lo_u]


def connection_distance(branch_u: ManifoldBranch, stable: list, local_radius: float = 0.02):
    """One-sided Hausdorff distance from the unstable branch to the stable ones.

    Only the overlap counts: nodes outside the ``local_radius`` ball around
    the base point whose nearest stable point is interior to a stable
    polyline.  Returns ``(distance, overlap_length)``.
    """
    P = branch_u.fixture.table.perimeter
    U = branch_u.points
    far = np.linalg.norm(U - branch_u.fixture.base, axis=1) > local_radius
    best = np.full(len(U), np.inf)
    interior = np.zeros(len(U), dtype=bool)
    for br in stable:
        for m in perimeter_shifts(U, br.points, P):
            S = br.points + np.array([m * P, 0.0])
            d, seg = point_to_polyline(U, S)
            better = d < best
            best[better] = d[better]
            interior[better] = seg[better] < len(S) - 2
    mask = far & interior & np.isfinite(best)
    if not mask.any():
        return math.inf, 0.0
    seglen = np.diff(branch_u.cum_length)
    both = mask[:-1] & mask[1:]
    return float(best[mask].max()), float(seglen[both].sum())


def _as_orbit_sets(branches: dict) -> dict:
    return {k: (v if isinstance(v, (list, tuple)) else [v]) for k, v in branches.items()}


def quadrant_accumulation(branches: dict, local_radius: float = 0.1,
                          threshold: float = 1e-2, eps_conn: float = 1e-4,
                          min_overlap: float = 2.0):
    """From which quadrant each branch accumulates on the local arcs of the others.

    ``branches`` maps a kind to its branch at orbit point 0, or to the list
    of branches of that kind at every orbit point.  For an ordered pair
    (A, B), nodes of A (at point 0, after it first leaves the ball of radius
    ``2 * local_radius``) lying in the annulus ``local_radius/4 .. local_radius``
    around an orbit point p_j are compared with B's local arc at p_j.  The
    closest approach is resolved into p_j's quadrant frame (frames and labels
    are transported along the orbit by the linearization, so quadrants mean
    the same thing at every point).

    A pair whose curves coincide over at least ``min_overlap`` of length is
    reported as a saddle connection rather than an accumulation.
    """
    sets = _as_orbit_sets(branches)
    fx0 = sets["unstable+"][0].fixture
    P = fx0.table.perimeter
    result = {}
    for a, As in sets.items():
        A = As[0]
        d0 = np.linalg.norm(A.points - A.fixture.base, axis=1)
        out = d0 > 2.0 * local_radius
        start = int(np.argmax(out)) if out.any() else len(d0)
        late = A.points[start:]
        for b, Bs in sets.items():
            if b == a:
                continue
            entry = {"distance": math.inf, "quadrant": None, "point_index": None,
                     "connection": False}
            if a.startswith("unstable") != b.startswith("unstable"):
                u, s_ = (A, Bs) if a.startswith("unstable") else (Bs[0], As)
                if isinstance(s_, ManifoldBranch):
                    s_ = [s_]
                dist, overlap = connection_distance(u, s_)
                if overlap >= min_overlap and dist < eps_conn:
                    entry.update(distance=dist, connection=True)
                    result[(a, b)] = entry
                    continue
            for B in Bs:
                fx = B.fixture
                loc = B.points[np.linalg.norm(B.points - fx.base, axis=1) <= local_radius]
                if len(loc) < 2 or len(late) == 0:
                    continue
                for m in perimeter_shifts(late, loc, P):
                    L = late - np.array([m * P, 0.0])
                    rr = np.linalg.norm(L - fx.base, axis=1)
                    near = (rr >= 0.25 * local_radius) & (rr <= local_radius)
                    if not near.any():
                        continue
                    d, _ = point_to_polyline(L[near], loc)
                    k = int(np.argmin(d))
                    if d[k] < entry["distance"]:
                        x, y = fx.eigen_coords(L[near][k])[0]
                        entry.update(distance=float(d[k]), quadrant=fx.quadrant(x, y),
                                     point_index=fx.index)
            result[(a, b)] = entry
    between = {("unstable+", "stable+"): 1, ("stable+", "unstable-"): 2,
               ("unstable-", "stable-"): 3, ("stable-", "unstable+"): 4}
    adjacent, connections = [], []
    for (p, q), quad in between.items():
        r1, r2 = result.get((p, q)), result.get((q, p))
        if not (r1 and r2):
            continue
        if r1["connection"] or r2["connection"]:
            connections.append({"pair": (p, q), "distance": min(r1["distance"], r2["distance"])})
            continue
        if r1["quadrant"] == quad and r2["quadrant"] == quad and \
                max(r1["distance"], r2["distance"]) < threshold:
            adjacent.append({"pair": (p, q), "quadrant": quad,
                             "distance": max(r1["distance"], r2["distance"])})
    if not adjacent and not connections and \
            not any(v["distance"] < threshold for v in result.values()):
        raise Inconclusive("no branch approached another below threshold within the budget")
    return {"matrix": result, "adjacent": adjacent, "saddle_connections": connections,
            "threshold": threshold, "local_radius": local_radius}


def occupancy_hausdorff(a: ManifoldBranch, b: ManifoldBranch, cells: int = 200) -> float:
    """Symmetric Hausdorff distance between grid-occupancy sets of two branches.

    The phase cylinder [0, P) x (-1, 1) is split into ``cells`` x ``cells``
    cells; distances are measured between occupied cell centres with the
    r-direction periodic.
    """
    P = a.fixture.table.perimeter

    def occ(br):
        p = br.points
        i = np.floor(np.mod(p[:, 0], P) / P * cells).astype(int) % cells
        j = np.clip(np.floor((p[:, 1] + 1.0) / 2.0 * cells).astype(int), 0, cells - 1)
        ij = np.unique(np.stack([i, j], axis=1), axis=0)
        return np.column_stack([(ij[:, 0] + 0.5) * P / cells, (ij[:, 1] + 0.5) * 2.0 / cells])

    A, B = occ(a), occ(b)
    box = [P, 10.0]
    ta = cKDTree(A + [0, 1.0], boxsize=box)
    tb = cKDTree(B + [0, 1.0], boxsize=box)
    dab, _ = tb.query(A + [0, 1.0])
    dba, _ = ta.query(B + [0, 1.0])
    return float(max(dab.max(), dba.max()))
