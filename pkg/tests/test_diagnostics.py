import math

import numpy as np
import pytest
from scipy.optimize import brentq

from billiards import PhasePoint, Table, find_orbit, perturbed_ellipse
from billiards.diagnostics import (ContinuationLost, bifurcation_trace, lazutkin_band_check,
                                   rotation_fluctuation, rotation_number)
from billiards.billiard_map import ellipse_focal_invariant
from billiards.periodic_orbits import enumerate_orbits
from billiards.table import SupportFunction, ellipse
from conftest import B_PAPER

MINOR = [math.pi / 2, 3 * math.pi / 2]


# ------------------------------------------------------------- rotation number

@pytest.mark.parametrize("s,expected", [(0.5, 1 / 3), (0.0, 1 / 2),
                                        (math.sin(math.pi / 4), 1 / 4)])
def test_circle_rotation_number(circle_table, s, expected):
    # on the circle every bounce turns by pi - 2 phi, so rho = (1 - s') / 2 with s' = 2 asin(s) / pi
    assert rotation_number(circle_table, PhasePoint(0.3, s), 10_000) == pytest.approx(expected, abs=1e-8)


def test_circle_irrational_rotation(circle_table):
    s = 0.3
    expected = 0.5 - math.asin(s) / math.pi
    assert rotation_number(circle_table, PhasePoint(1.0, s), 20_000) == pytest.approx(expected, abs=1e-10)


def test_periodic_orbits_have_rational_rotation(perturbed_table):
    for o in enumerate_orbits(perturbed_table, 5):
        p, q = o.rotation_class
        assert rotation_number(perturbed_table, o.phase_points, 1000) == pytest.approx(p / q, abs=1e-9)


def test_rotation_number_rejects_tiny_n(circle_table):
    with pytest.raises(ValueError):
        rotation_number(circle_table, PhasePoint(0.0, 0.5), 1)


# ------------------------------------------------------------- boundary band

def test_circle_band_is_flat(circle_table):
    for b in lazutkin_band_check(circle_table, (0.95, 0.99), samples=4, n=2000):
        assert b.oscillation < 1e-12
        assert b.tangency_at is None


def _oracle_range(table, theta0, s0, grid=1500):
    """sup s - inf s over the caustic fixed by the focal invariant of (theta0, s0)."""
    a, b = 1.0, B_PAPER
    I0 = float(ellipse_focal_invariant(table, a, b, np.array([theta0]), np.array([s0]))[0])
    vals = []
    for th in np.linspace(0.0, 2 * math.pi, grid, endpoint=False):
        g = lambda s: float(ellipse_focal_invariant(table, a, b, np.array([th]), np.array([s]))[0]) - I0
        lo, hi = 0.5, 1.0 - 1e-12
        if g(lo) * g(hi) < 0:
            vals.append(brentq(g, lo, hi, xtol=1e-15))
    return min(vals), max(vals)


@pytest.fixture(scope="module")
def band_starts(ellipse_table):
    return [PhasePoint(0.37, 0.99), PhasePoint(2.1, 0.97)]


def test_ellipse_band_matches_integrable_oracle(ellipse_table, band_starts):
    samples = lazutkin_band_check(ellipse_table, starts=band_starts, n=100_000)
    for x, smp in zip(band_starts, samples):
        th0 = float(ellipse_table.theta_of_r(x.r))
        lo, hi = _oracle_range(ellipse_table, th0, x.s)
        assert smp.s_min >= lo - 1e-9 and smp.s_max <= hi + 1e-9
        # a long orbit fills its caustic, so the spread approaches the oracle
        assert smp.oscillation == pytest.approx(hi - lo, rel=0.01)


def test_small_perturbation_keeps_band_close_to_integrable(ellipse_table, perturbed_table,
                                                           band_starts):
    ref = lazutkin_band_check(ellipse_table, starts=band_starts, n=100_000)
    per = lazutkin_band_check(perturbed_table, starts=band_starts, n=100_000)
    for a, b in zip(ref, per):
        assert b.tangency_at is None
        assert b.oscillation == pytest.approx(a.oscillation, rel=0.25)


def test_rotation_number_converges_in_band(perturbed_table, band_starts):
    for x in band_starts + [PhasePoint(1.0, 0.995)]:
        _, d = rotation_fluctuation(perturbed_table, x, 100_000)
        assert d < 1e-6


def test_large_perturbation_contrast():
    big = Table(perturbed_ellipse(1.0, B_PAPER, 0.05))
    small = Table(perturbed_ellipse(1.0, B_PAPER, 0.005))
    start = [PhasePoint(0.5, 0.8)]
    wide = lazutkin_band_check(big, starts=start, n=20_000)[0].oscillation
    narrow = lazutkin_band_check(small, starts=start, n=20_000)[0].oscillation
    assert wide >= 0.1
    assert wide > 10 * narrow


def test_band_sampling_is_seeded(perturbed_table):
    a = lazutkin_band_check(perturbed_table, samples=3, n=500, seed=7)
    b = lazutkin_band_check(perturbed_table, samples=3, n=500, seed=7)
    assert [(x.r, x.s, x.oscillation) for x in a] == [(x.r, x.s, x.oscillation) for x in b]
    with pytest.raises(ValueError):
        lazutkin_band_check(perturbed_table, band=(0.9, 1.0))


# ------------------------------------------------------------- trace continuation

def _family(kind):
    base = ellipse(1.0, B_PAPER)
    bump = SupportFunction(0.0, ((3, 0.0, 1.0),) if kind == "sin" else ((3, 1.0, 0.0),))
    return lambda eps: base.plus(bump, eps)


def test_single_sample_matches_classification(perturbed_table, perturbed_major):
    fam = lambda eps: perturbed_ellipse(1.0, B_PAPER, 0.005)
    tr = bifurcation_trace(fam, [0.0], perturbed_major.thetas, 1)
    assert tr.samples[0].trace == pytest.approx(perturbed_major.trace, abs=1e-10)
    assert tr.samples[0].stability == perturbed_major.stability
    assert tr.crossings == []


def test_circle_family_flags_degenerate_continuum():
    fam = lambda eps: SupportFunction(1.0 + eps, ())
    tr = bifurcation_trace(fam, [0.0, 0.1], [0.0, math.pi], 1)
    assert tr.degenerate
    assert all(x.degenerate for x in tr.samples)


def test_minor_axis_touch_under_sin_family():
    eps = np.linspace(-0.02, 0.02, 41)
    tr = bifurcation_trace(_family("sin"), eps, MINOR, 1)
    g = np.array([abs(x.trace) - 2 for x in tr.samples])
    assert (g[np.abs(eps) > 1e-12] > 0).all()
    assert abs(g[20]) < 1e-6
    touch = [c for c in tr.crossings if c["kind"] == "touch"]
    assert len(touch) == 1 and touch[0]["eps"] == pytest.approx(0.0, abs=1e-15)
    # the contact is quadratic: |trace| - 2 grows like eps^2
    assert g[30] / g[25] == pytest.approx((eps[30] / eps[25]) ** 2, rel=0.05)
    d = tr.to_dict()
    assert len(d["samples"]) == 41 and d["degenerate_continuum"] is False


def test_transversal_crossing_is_located():
    # a nearly circular table whose x-axis diameter turns from short to long at eps = 0
    fam = lambda eps: SupportFunction(1.0, ((2, eps, 0.0),))
    eps = np.linspace(-0.05, 0.05, 10)
    tr = bifurcation_trace(fam, eps, [0.0, math.pi], 1)
    cross = [c for c in tr.crossings if c["kind"] == "transversal"]
    assert len(cross) == 1
    assert cross[0]["eps"] == pytest.approx(0.0, abs=1e-3)
    assert cross[0]["slope_sign"] == 1
    assert tr.samples[0].stability == "elliptic" and tr.samples[-1].stability == "hyperbolic"


def test_continuation_lost_when_table_breaks():
    fam = lambda eps: perturbed_ellipse(1.0, B_PAPER, eps)
    with pytest.raises(ContinuationLost) as info:
        bifurcation_trace(fam, [0.0, 0.1, 0.3], [0.0, math.pi], 1)
    assert info.value.eps > 0.0
