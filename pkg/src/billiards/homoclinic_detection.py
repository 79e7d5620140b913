"""Intersections between unstable and stable branches.

Crossings are found on the unrolled phase cylinder: the stable polylines are
translated by whole perimeters so that every overlap in lifted ``r`` with the
unstable polyline is examined.  Each raw crossing is refined by re-sampling
both branch parameter intervals from their seed segments (nodes are always
pushed forward from the linear regime, never interpolated) until the located
point is known to ``tol``.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import geometry2d as g2
from .invariant_manifolds import (Budget, ManifoldBranch, connection_distance, evaluator,
                                  orbit_fixtures, perimeter_shifts, seed_and_grow)

THETA_MIN = 1e-3
EPS_CONN = 1e-4


class LostCrossing(RuntimeError):
    """Refinement lost the sign change of a crossing (tangency suspect)."""


@dataclass
class Thresholds:
    theta_min: float = THETA_MIN
    eps_conn: float = EPS_CONN
    min_overlap: float = 2.0
    exclusion_radius: float = 1e-4
    refine_tol: float = 1e-9
    image_tol: float = 1e-6
    max_refine: int = 64

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class CrossingCandidate:
    branch_u: str
    branch_s: str
    seg_u: int
    seg_s: int
    shift: int                      # stable branch translated by shift * perimeter
    point: np.ndarray
    raw_angle: float
    tau_u: float = math.nan
    tau_s: float = math.nan
    angle: float = math.nan         # refined angle (nan until refined)
    refined: bool = False
    depth: int = 0

    @property
    def generation_u(self) -> int:
        return int(math.floor(self.tau_u)) if math.isfinite(self.tau_u) else 0

    @property
    def generation_s(self) -> int:
        return int(math.floor(self.tau_s)) if math.isfinite(self.tau_s) else 0

    def to_dict(self, perimeter: float):
        return {"r": float(self.point[0] % perimeter), "s": float(self.point[1]),
                "angle": float(self.angle if self.refined else self.raw_angle),
                "generation_u": self.generation_u, "generation_s": self.generation_s,
                "branch_u": self.branch_u, "branch_s": self.branch_s}


def _label(branch: ManifoldBranch) -> str:
    return f"{branch.kind}@{branch.fixture.index}"


def _interp_tau(tau, i, a):
    t0, t1 = tau[i], tau[i + 1]
    if not math.isfinite(t0):
        return t1
    return t0 + a * (t1 - t0)


def intersect_polylines(branch_u: ManifoldBranch, branch_s: ManifoldBranch,
                        brute: bool = False, exclusion=None):
    """All crossings of the two branch polylines, raw (unrefined).

    ``exclusion`` is an optional ``(points, radius)``: crossings within
    ``radius`` of any of the points (the periodic orbit itself, where all
    branches meet) are dropped.
    """
    P = branch_u.fixture.table.perimeter
    U = branch_u.points
    S0 = branch_s.points
    same = branch_u is branch_s
    out = []
    for m in perimeter_shifts(U, S0, P):
        S = S0 + np.array([m * P, 0.0])
        I, J = g2.crossing_pairs(U, S, brute=brute)
        if same and m == 0:
            keep = np.abs(I - J) > 1
            I, J = I[keep], J[keep]
        if I.size == 0:
            continue
        a, b = g2.intersection_params(U[I], U[I + 1], S[J], S[J + 1])
        pts = U[I] + a[:, None] * (U[I + 1] - U[I])
        ang = g2.segment_angle(U[I + 1] - U[I], S[J + 1] - S[J])
        for k in range(I.size):
            out.append(CrossingCandidate(
                _label(branch_u), _label(branch_s), int(I[k]), int(J[k]), m, pts[k],
                float(ang[k]),
                _interp_tau(branch_u.tau, I[k], a[k]), _interp_tau(branch_s.tau, J[k], b[k])))
    if exclusion is not None and out:
        centers, radius = exclusion
        cen = np.asarray(centers, dtype=float)
        keep = []
        for c in out:
            d = np.abs(cen[:, 0] - c.point[0]) % P
            d = np.minimum(d, P - d)
            if np.min(np.hypot(d, cen[:, 1] - c.point[1])) > radius:
                keep.append(c)
        out = keep
    return out


def _tau_bounds(branch, i):
    t0, t1 = branch.tau[i], branch.tau[i + 1]
    if not math.isfinite(t0):
        t0 = t1 - 40.0          # base point: lambda^-40 of the seed offset
    return t0, t1


def refine_crossing(branch_u: ManifoldBranch, branch_s: ManifoldBranch,
                    cand: CrossingCandidate, tol: float = 1e-9, samples: int = 9,
                    max_depth: int = 60) -> CrossingCandidate:
    """Shrink both parameter intervals around the crossing until it is located to ``tol``.

    Every level re-evaluates ``samples`` nodes per interval from the seed
    segments and keeps the sub-segment pair that still crosses (the one
    nearest the current estimate when there are several).
    """
    P = branch_u.fixture.table.perimeter
    ev_u, ev_s = evaluator(branch_u), evaluator(branch_s)
    shift = np.array([cand.shift * P, 0.0])
    ua, ub = _tau_bounds(branch_u, cand.seg_u)
    sa, sb = _tau_bounds(branch_s, cand.seg_s)
    # the exact nodes of the original segments
    u_end = (branch_u.points[cand.seg_u], branch_u.points[cand.seg_u + 1])
    s_end = (branch_s.points[cand.seg_s] + shift, branch_s.points[cand.seg_s + 1] + shift)
    est = cand.point.copy()
    depth = 0
    while True:
        tu = np.linspace(ua, ub, samples)
        ts = np.linspace(sa, sb, samples)
        U, ok_u = ev_u(tu)
        S, ok_s = ev_s(ts)
        if not (ok_u.all() and ok_s.all()):
            raise LostCrossing("tangency while refining")
        U[0], U[-1] = u_end
        S = S + shift
        S[0], S[-1] = s_end
        I, J = g2.crossing_pairs(U, S, brute=True)
        if I.size == 0:
            raise LostCrossing(f"sign change lost at depth {depth}")
        a, b = g2.intersection_params(U[I], U[I + 1], S[J], S[J + 1])
        pts = U[I] + a[:, None] * (U[I + 1] - U[I])
        k = int(np.argmin(np.linalg.norm(pts - est, axis=1)))
        i, j = int(I[k]), int(J[k])
        est = pts[k]
        du = U[i + 1] - U[i]
        ds = S[j + 1] - S[j]
        ua, ub = tu[i], tu[i + 1]
        sa, sb = ts[j], ts[j + 1]
        u_end = (U[i], U[i + 1])
        s_end = (S[j], S[j + 1])
        depth += 1
        small = max(np.linalg.norm(du), np.linalg.norm(ds)) < tol
        if small or depth >= max_depth or ub - ua <= 1e-15 * max(1.0, abs(ub)):
            break
    angle = float(g2.segment_angle(du, ds))
    return CrossingCandidate(cand.branch_u, cand.branch_s, cand.seg_u, cand.seg_s, cand.shift,
                             est, cand.raw_angle, ua + a[k] * (ub - ua), sa + b[k] * (sb - sa),
                             angle, True, depth)


def round_trip_error(branch_u: ManifoldBranch, cand: CrossingCandidate) -> float:
    """Distance between a crossing and f^g(f^-g(crossing)) with g its generation."""
    fx = branch_u.fixture
    g = max(cand.generation_u, 0)
    x = cand.point[None, :]
    for _ in range(g):
        x, _ = fx.f(x, inverse=True)
    for _ in range(g):
        x, _ = fx.f(x)
    return float(np.linalg.norm(x[0] - cand.point))


@dataclass
class HomoclinicReport:
    pair: tuple
    verdict: str
    crossings: list
    parity_check: bool
    thresholds: Thresholds
    budget: Budget
    hausdorff: float = math.inf
    overlap_length: float = 0.0
    transversal_count: int = 0
    lost: int = 0
    image_check: dict = field(default_factory=dict)
    perimeter: float = 0.0

    @property
    def label(self) -> str:
        if self.verdict == "transversal":
            return f"transversal({self.transversal_count} crossings)"
        return self.verdict

    def to_dict(self):
        return {
            "pair": list(self.pair),
            "verdict": self.verdict,
            "label": self.label,
            "transversal_count": self.transversal_count,
            "candidate_count": len(self.crossings),
            "refined_count": sum(c.refined for c in self.crossings),
            "parity_check": self.parity_check,
            "hausdorff": None if math.isinf(self.hausdorff) else self.hausdorff,
            "overlap_length": self.overlap_length,
            "lost_crossings": self.lost,
            "image_check": self.image_check,
            "thresholds": self.thresholds.to_dict(),
            "budget": {"max_generations": self.budget.max_generations,
                       "max_cum_length": self.budget.max_cum_length},
            "crossings": [c.to_dict(self.perimeter) for c in self.crossings],
            # a tangency verdict may be a true tangency or too small a budget
            "hypotheses": (["true_tangency", "insufficient_budget"]
                           if self.verdict in ("tangential", "disjoint_within_budget") else []),
        }


def _closed(points):
    return np.vstack([points, points[:1]])


def parity_check(branch_u: ManifoldBranch, stable: list, offset=(7.548776662e-10, 5.698402910e-10)):
    """Closed loops (branch + closing segment to its base) cross an even number of times."""
    P = branch_u.fixture.table.perimeter
    U = _closed(branch_u.points)
    for br in stable:
        S0 = _closed(br.points) + np.asarray(offset)
        for m in perimeter_shifts(U, S0, P):
            I, _ = g2.crossing_pairs(U, S0 + np.array([m * P, 0.0]))
            if I.size % 2:
                return False
    return True


def _image_check(branch_u, crossings, pool, thr, exclusion):
    """Images under f of refined transversal crossings must again be crossings.

    ``pool`` is the full list of ``(stable_branch, candidate)`` pairs; the
    candidate nearest each image is refined on demand before measuring.
    """
    fx = branch_u.fixture
    P = fx.table.perimeter
    if not crossings or not pool:
        return {"checked": 0, "max_distance": None, "ok": True}
    tree = cKDTree(np.array([c.point for _, c in pool]))
    cen = np.asarray(exclusion[0], dtype=float)
    umax = branch_u.tau[-1]
    worst, checked = 0.0, 0
    for c in crossings:
        if c.tau_u + 1.0 > umax or c.tau_s - 1.0 < 0.0:
            continue
        img, ok = fx.f(c.point[None, :])
        if not ok[0]:
            continue
        d = np.abs(cen[:, 0] - img[0, 0]) % P
        d = np.minimum(d, P - d)
        if np.min(np.hypot(d, cen[:, 1] - img[0, 1])) <= exclusion[1]:
            continue
        _, k = tree.query(img[0])
        br, other = pool[k]
        if not other.refined:
            try:
                other = refine_crossing(branch_u, br, other, tol=thr.refine_tol)
            except LostCrossing:
                pass
        worst = max(worst, float(np.linalg.norm(other.point - img[0])))
        checked += 1
    return {"checked": checked, "max_distance": worst if checked else None,
            "ok": checked == 0 or worst < thr.image_tol}


def classify_pair(branch_u: ManifoldBranch, stable: list, thresholds: Thresholds | None = None,
                  budget: Budget | None = None, refine: bool = True) -> HomoclinicReport:
    """Verdict for one unstable branch against a family of stable branches.

    ``stable`` holds the stable branches of one kind at every point of the
    target orbit (a single branch is accepted too).  At most
    ``thresholds.max_refine`` crossings are refined (earliest along the
    unstable branch first, more only while none is transversal); the rest
    are reported with their raw angles.
    """
    thr = thresholds or Thresholds()
    if isinstance(stable, ManifoldBranch):
        stable = [stable]
    P = branch_u.fixture.table.perimeter
    orbit_pts = [br.fixture.base for br in stable] + [branch_u.fixture.base]
    exclusion = (orbit_pts, thr.exclusion_radius)
    raw = []
    for br in stable:
        raw.extend((br, c) for c in intersect_polylines(branch_u, br, exclusion=exclusion))
    raw.sort(key=lambda bc: (bc[1].tau_u, bc[1].tau_s))
    parity = all(parity_check(branch_u, [br]) for br in stable)
    dist, overlap = connection_distance(branch_u, stable)
    connected = overlap >= thr.min_overlap and dist < thr.eps_conn
    out, lost, n_trans = [], 0, 0
    for br, c in raw:
        # crossings of coincident curves are rounding noise: keep them raw
        if not refine or connected or (len(out) >= thr.max_refine and n_trans):
            c.angle = c.raw_angle
            out.append(c)
            continue
        try:
            r = refine_crossing(branch_u, br, c, tol=thr.refine_tol)
        except LostCrossing:
            lost += 1
            continue
        out.append(r)
        n_trans += r.angle > thr.theta_min
    if connected:
        verdict = "saddle_connection"
    elif n_trans:
        verdict = "transversal"
    elif out or lost:
        verdict = "tangential"
    else:
        verdict = "disjoint_within_budget"
    pair = (_label(branch_u), ",".join(_label(b) for b in stable))
    budget = budget or Budget(branch_u.generations, float(branch_u.total_length))
    rep = HomoclinicReport(pair, verdict, out, parity, thr, budget, dist, overlap,
                           n_trans, lost, perimeter=P)
    if verdict == "transversal":
        trans = [c for c in out if c.refined and c.angle > thr.theta_min]
        rep.image_check = _image_check(branch_u, trans, raw, thr, exclusion)
    return rep


def _threads():
    try:
        return max(1, int(os.environ.get("BILLIARDS_THREADS", "1")))
    except ValueError:
        return 1


def grow_orbit_branches(table, orbit, budget: Budget, **kw):
    """All four branch kinds at every point of the orbit: ``{kind: [branch per point]}``."""
    fixtures = orbit_fixtures(table, orbit)
    jobs = [(fx, k) for k in ("unstable+", "stable+", "unstable-", "stable-") for fx in fixtures]
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        res = list(pool.map(lambda job: seed_and_grow(job[0], job[1], budget, **kw), jobs))
    out = {}
    for (fx, k), br in zip(jobs, res):
        out.setdefault(k, []).append(br)
    return out


def homoclinic_reports(branches: dict, thresholds: Thresholds | None = None,
                       budget: Budget | None = None):
    """Verdicts for the four (unstable, stable) pairings at orbit point 0."""
    reps = {}
    for ku in ("unstable+", "unstable-"):
        for ks in ("stable+", "stable-"):
            reps[(ku, ks)] = classify_pair(branches[ku][0], branches[ks], thresholds, budget)
    return reps


def heteroclinic_scan(table, orbits: list, budget: Budget | None = None,
                      thresholds: Thresholds | None = None, branches: list | None = None):
    """Reports for every ordered orbit pair (p, q), unstable of p against stable of q."""
    budget = budget or Budget()
    if branches is None:
        branches = [grow_orbit_branches(table, o, budget) for o in orbits]
    matrix = {}
    jobs = []
    for a in range(len(orbits)):
        for b in range(len(orbits)):
            for ku in ("unstable+", "unstable-"):
                for ks in ("stable+", "stable-"):
                    jobs.append((a, b, ku, ks))

    def run(job):
        a, b, ku, ks = job
        return classify_pair(branches[a][ku][0], branches[b][ks], thresholds, budget)

    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        for job, rep in zip(jobs, pool.map(run, jobs)):
            a, b, ku, ks = job
            matrix.setdefault((a, b), {})[(ku, ks)] = rep
    return matrix
