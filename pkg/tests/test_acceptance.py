"""Acceptance criteria 1-14, each printing one PASS/FAIL line."""
import json
import math
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from billiards import (Budget, PhasePoint, Table, find_orbit, perturbed_ellipse,
                       rotation_number)
from billiards.billiard_map import BilliardMap, ellipse_focal_invariant, twist_defect
from billiards.diagnostics import bifurcation_trace
from billiards.homoclinic_detection import THETA_MIN, heteroclinic_scan
from billiards.invariant_manifolds import KINDS, linearize, recurrence_diagnostic, seed_and_grow
from billiards.periodic_orbits import enumerate_orbits, mirror_trace
from billiards.scenario import ScenarioConfig, run_scenario
from billiards.table import SupportFunction, ellipse
from conftest import B_PAPER, TIMINGS

TWO_PI = 2.0 * math.pi
SCEN = Path(__file__).resolve().parents[1] / "scenarios"
HEAVY = {"perturbed_homoclinic.json", "minor_axis_heteroclinic.json"}


@pytest.fixture
def criterion(capsys):
    """Run a criterion body and print its verdict line whatever happens."""
    def run(number, title, body):
        ok = False
        try:
            body()
            ok = True
        finally:
            with capsys.disabled():
                print(f"\nCRITERION {number:2d} {'PASS' if ok else 'FAIL'}: {title}")
    return run


def _states(n, seed, s_max):
    rng = np.random.default_rng(seed)
    return rng.uniform(0.0, TWO_PI, n), rng.uniform(-s_max, s_max, n)


def _fd_jacobian(bm, th, s, h=1e-6):
    r = bm.to_r(th)
    J = np.empty(th.shape + (2, 2))
    for col, (dr, ds) in enumerate(((h, 0.0), (0.0, h))):
        tp, sp, _ = bm.step_ts(bm.to_theta(r + dr), s + ds)
        tm, sm, _ = bm.step_ts(bm.to_theta(r - dr), s - ds)
        J[:, 0, col] = (bm.to_r(tp) - bm.to_r(tm)) / (2 * h)
        J[:, 1, col] = (sp - sm) / (2 * h)
    return J


def test_01_area_preservation(criterion, tables):
    def body():
        t0 = time.perf_counter()
        for table in tables.values():
            th, s = _states(10_000, 1, 0.999)
            J = BilliardMap(table).jacobian_ts(th, s)
            assert np.max(np.abs(np.linalg.det(J) - 1.0)) < 1e-9
        assert time.perf_counter() - t0 < 10.0
    criterion(1, "area preservation", body)


def test_02_jacobian_vs_finite_differences(criterion, tables):
    def body():
        for table in tables.values():
            bm = BilliardMap(table)
            th, s = _states(1000, 2, 0.95)
            J = bm.jacobian_ts(th, s)
            F = _fd_jacobian(bm, th, s)
            rel = np.linalg.norm(J - F, axis=(1, 2)) / np.linalg.norm(J, axis=(1, 2))
            assert rel.max() < 1e-5
    criterion(2, "Jacobian vs central differences", body)


def test_03_circle_closed_form(criterion, circle_table):
    def body():
        bm = BilliardMap(circle_table)
        th, s = _states(8, 3, 0.99)
        s0 = s.copy()
        th, s, ok = bm.iterate_ts(th, s, 10_000)
        assert ok.all()
        assert np.max(np.abs(s - s0)) < 1e-12
        assert rotation_number(circle_table, PhasePoint(0.0, 0.5)) == pytest.approx(1 / 3, abs=1e-8)
    criterion(3, "circle closed form", body)


def test_04_ellipse_example(criterion, ellipse_table, ellipse_major):
    def body():
        minor = find_orbit(ellipse_table, (1, 2), [math.pi / 2, 3 * math.pi / 2])
        assert abs(abs(minor.trace) - 2.0) < 1e-6
        assert abs(abs(ellipse_major.trace) - 34.0) < 1e-6
        lam = max(abs(e) for e in ellipse_major.eigenvalues)
        assert abs(lam - (17 + 12 * math.sqrt(2))) < 1e-6
        rho = ellipse_table.rho(ellipse_major.thetas)
        oracle = mirror_trace(ellipse_major.total_length / 2, rho[0], rho[1])
        assert ellipse_major.trace == pytest.approx(oracle, abs=1e-6)
        t6 = Table(ellipse(1.0, 0.6))
        m6 = find_orbit(t6, (1, 2), [math.pi / 2, 3 * math.pi / 2])
        assert m6.stability == "elliptic"
        assert abs(abs(m6.trace) - 1.6864) < 1e-4
    criterion(4, "ellipse period-2 classification", body)


def test_05_twist(criterion, tables):
    def body():
        for table in tables.values():
            m, _ = twist_defect(table, samples=10_000)
            assert m > 0
    criterion(5, "monotone twist", body)


def test_06_no_fixed_points(criterion, perturbed_table):
    def body():
        assert enumerate_orbits(perturbed_table, 1) == []
        two = enumerate_orbits(perturbed_table, 2)
        assert two
        assert all(o.max_abs_s < 1e-9 for o in two)
    criterion(6, "no fixed points, period 2 on s = 0", body)


@pytest.fixture(scope="module")
def orbits_to_8(perturbed_table):
    return enumerate_orbits(perturbed_table, 8)


def test_07_annulus_bound(criterion, orbits_to_8):
    def body():
        for o in orbits_to_8:
            k = o.period
            assert o.min_abs_s <= math.sin((0.5 - 1.0 / k) * math.pi) + 1e-9
    criterion(7, "annulus bound", body)


def test_08_saddle_connection(criterion, ellipse_reports):
    def body():
        conn = [r for r in ellipse_reports.values() if r.verdict == "saddle_connection"]
        assert conn
        for r in conn:
            assert r.hausdorff < 1e-4
            assert r.overlap_length >= 2.0
            assert all(c.raw_angle <= THETA_MIN for c in r.crossings)
        assert TIMINGS["ellipse_branches"] + TIMINGS["ellipse_reports"] < 60.0
    criterion(8, "integrable saddle connection", body)


def test_09_transversal_homoclinics(criterion, perturbed_reports):
    def body():
        assert len(perturbed_reports) == 4
        for r in perturbed_reports.values():
            assert r.verdict == "transversal"
            assert r.budget.max_generations == 12
            assert any(c.refined and c.angle > THETA_MIN for c in r.crossings)
            assert r.image_check["ok"]
            assert r.image_check["checked"] >= 1
            assert r.image_check["max_distance"] <= 1e-6
        assert TIMINGS["perturbed_branches"] + TIMINGS["perturbed_reports"] < 300.0
    criterion(9, "transversal homoclinics on all branch pairs", body)


@pytest.mark.slow
def test_10_recurrence(criterion, perturbed_major, perturbed_table):
    def body():
        fx = linearize(perturbed_table, perturbed_major)
        for kind in KINDS:
            budget, mins = Budget(12, 10.0), []
            for _ in range(4):
                mins.append(recurrence_diagnostic(seed_and_grow(fx, kind, budget)).minimum)
                budget = budget.doubled()
            assert all(b < a for a, b in zip(mins, mins[1:])), (kind, mins)
    criterion(10, "recurrence over three budget doublings", body)


@pytest.mark.slow
def test_11_heteroclinic_illustration(criterion):
    def body():
        base = ellipse(1.0, B_PAPER)
        bump = SupportFunction(0.0, ((3, 0.0, 1.0),))
        minor_seed = [math.pi / 2, 3 * math.pi / 2]
        tr = bifurcation_trace(lambda e: base.plus(bump, e), np.linspace(0.0, 0.02, 5),
                               minor_seed, 1)
        assert tr.samples[0].stability == "parabolic"
        assert tr.samples[-1].stability == "hyperbolic"
        table = Table(base.plus(bump, 0.02))
        major = find_orbit(table, (1, 2), [0.0, math.pi])
        minor = find_orbit(table, (1, 2), tr.samples[-1].thetas)
        assert minor.stability == "hyperbolic"
        m = heteroclinic_scan(table, [major, minor], Budget())
        for a in (0, 1):
            assert all(r.verdict == "transversal" for r in m[(a, a)].values())
        for pair in ((0, 1), (1, 0)):
            assert all(r.verdict == "disjoint_within_budget" for r in m[pair].values())
        # time reversal swaps the roles of the two orbits
        for a, b in ((0, 1), (1, 0), (0, 0), (1, 1)):
            assert sorted(r.verdict for r in m[(a, b)].values()) == \
                sorted(r.verdict for r in m[(b, a)].values())
    criterion(11, "no major/minor heteroclinic within budget", body)


def test_12_poincare_birkhoff(criterion, orbits_to_8):
    def body():
        count = {}
        for o in orbits_to_8:
            key = Fraction(*o.rotation_class)
            count[key] = count.get(key, 0) + 1
        for pq in (Fraction(1, 2), Fraction(1, 3), Fraction(2, 5)):
            assert count.get(pq, 0) >= 2, pq
    criterion(12, "Poincare-Birkhoff count", body)


def test_13_focal_invariant(criterion, ellipse_table):
    def body():
        bm = BilliardMap(ellipse_table)
        th, s = _states(16, 13, 0.95)
        I0 = ellipse_focal_invariant(ellipse_table, 1.0, B_PAPER, th, s)
        worst = 0.0
        for _ in range(10_000):
            th, s, ok = bm.step_ts(th, s)
            assert ok.all()
            I = ellipse_focal_invariant(ellipse_table, 1.0, B_PAPER, th, s)
            worst = max(worst, float(np.max(np.abs(I - I0) / np.abs(I0))))
        assert worst < 1e-8
    criterion(13, "ellipse focal invariant", body)


def test_14_determinism(criterion, tmp_path):
    def body():
        for path in sorted(SCEN.glob("*.json")):
            if path.name in HEAVY:
                continue
            runs = []
            for sub in ("a", "b"):
                out = tmp_path / path.stem / sub
                run_scenario(ScenarioConfig.from_file(path, seed=11, out=str(out)))
                runs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())
                             if p.name != "timing.json"})
            assert runs[0] == runs[1], path.name
            assert runs[0]
    criterion(14, "byte-identical reruns", body)
