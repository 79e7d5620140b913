import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from billiards.table import (NotConvex, SupportFunction, Table, arclength, boundary_point,
                             build_atlas, circle, ellipse, eval_support_jet, perturbed_ellipse,
                             support_from_config, table_from_config, validate_table)

TWO_PI = 2.0 * math.pi


def cos3(eps):
    return SupportFunction(1.0, ((3, eps, 0.0),))


@st.composite
def convex_support(draw):
    """Random smooth tables with curvature radius bounded below by 1/2."""
    n = draw(st.integers(1, 4))
    ks = draw(st.lists(st.integers(2, 7), min_size=n, max_size=n, unique=True))
    hs, budget = [], 0.5
    for k in ks:
        share = budget / (len(ks) * (k * k - 1) * math.sqrt(2.0))
        a = draw(st.floats(-share, share))
        b = draw(st.floats(-share, share))
        hs.append((k, a, b))
    return SupportFunction(1.0, tuple(hs))


# ------------------------------------------------------------- support jet

def test_circle_jet_is_constant():
    v, d1, d2 = eval_support_jet(circle(), 1.3)
    assert (float(v), float(d1), float(d2)) == (1.0, 0.0, 0.0)


def test_cos3_jet_termwise():
    v, d1, d2 = eval_support_jet(cos3(0.01), 0.0)
    assert float(v) == pytest.approx(1.01, abs=1e-15)
    assert float(d1) == pytest.approx(0.0, abs=1e-15)
    assert float(d2) == pytest.approx(-0.09, abs=1e-15)


def test_ellipse_fit_matches_direct_support_function():
    a, b = 1.0, 1.0 / math.sqrt(2.0)
    h = ellipse(a, b)
    th = np.linspace(0.0, TWO_PI, 2001)
    direct = np.sqrt(a * a * np.cos(th) ** 2 + b * b * np.sin(th) ** 2)
    v, _, _ = eval_support_jet(h, th)
    # truncation residual: the dropped harmonics are below 1e-14 each and decay geometrically
    assert np.max(np.abs(v - direct)) < 1e-13
    assert float(eval_support_jet(h, 0.0)[0]) == pytest.approx(1.0, abs=1e-13)
    assert h.fit_order is not None and h.fit_order > 10


def test_ellipse_fit_has_only_even_cosines():
    h = ellipse(1.0, 0.6)
    assert all(k % 2 == 0 and b == 0.0 for k, _, b in h.harmonics)


def test_support_function_rejects_bad_harmonics():
    with pytest.raises(ValueError):
        SupportFunction(1.0, ((0, 0.1, 0.0),))
    with pytest.raises(ValueError):
        SupportFunction(1.0, ((2, math.nan, 0.0),))
    with pytest.raises(ValueError):
        SupportFunction(math.inf)


# ------------------------------------------------------------- boundary points

def test_circle_boundary_point():
    bp = boundary_point(circle(), math.pi / 2)
    assert np.allclose(bp.position, [0.0, 1.0], atol=1e-15)
    assert bp.curvature_radius == pytest.approx(1.0)
    assert bp.arclength == pytest.approx(math.pi / 2)


def test_cos3_curvature_radius_and_finite_differences():
    eps = 0.01
    t = Table(cos3(eps))
    bp = t.boundary_point(0.0)
    assert bp.curvature_radius == pytest.approx(1.0 - 8.0 * eps, abs=1e-14)
    # |d position / d theta| = rho, checked by central differences
    hstep = 1e-5
    d = (t.position(hstep) - t.position(-hstep)) / (2 * hstep)
    assert np.linalg.norm(d) == pytest.approx(0.92, rel=1e-8)


def test_boundary_point_frame_is_orthonormal(perturbed_table):
    for th in np.linspace(0.0, TWO_PI, 17)[:-1]:
        bp = perturbed_table.boundary_point(th)
        assert abs(np.linalg.norm(bp.tangent) - 1.0) < 1e-12
        assert abs(np.linalg.norm(bp.inward_normal) - 1.0) < 1e-12
        assert abs(bp.tangent @ bp.inward_normal) < 1e-12
        assert bp.curvature_radius > 0.0
        assert 0.0 <= bp.arclength < perturbed_table.perimeter


def test_circle_perimeter():
    assert Table(circle()).perimeter == pytest.approx(TWO_PI, abs=1e-12)


# ------------------------------------------------------------- validation

def test_validate_accepts_circle():
    assert validate_table(circle()) == pytest.approx(1.0)


def test_validate_rejects_strong_cos3():
    with pytest.raises(NotConvex) as info:
        validate_table(cos3(0.2))
    # rho = 1 - 1.6 cos 3 theta is most negative where cos 3 theta = 1
    assert info.value.rho == pytest.approx(1.0 - 1.6, abs=1e-9)
    assert math.cos(3.0 * info.value.theta) == pytest.approx(1.0, abs=1e-9)


def test_validate_reports_min_radius():
    assert validate_table(cos3(0.01)) == pytest.approx(0.92, abs=1e-12)


def test_validate_requires_dense_grid():
    with pytest.raises(ValueError):
        validate_table(circle(), grid=512)


def test_validate_finds_narrow_dip_between_grid_points():
    # a high harmonic whose minimum falls between grid points
    h = SupportFunction(1.0, ((40, 0.0, 1.0 / 1599.0 * 1.0005),))
    with pytest.raises(NotConvex):
        validate_table(h)


# ------------------------------------------------------------- atlas

def test_atlas_circle_perimeter():
    assert build_atlas(circle(), 4096).perimeter == pytest.approx(TWO_PI, abs=1e-12)


def test_atlas_cos3_perimeter_is_unchanged():
    assert build_atlas(cos3(0.01)).perimeter == pytest.approx(TWO_PI, abs=1e-10)


def test_atlas_round_trip(perturbed_table):
    rng = np.random.default_rng(1)
    P = perturbed_table.perimeter
    r = rng.uniform(0.0, P, 1000)
    back = perturbed_table.r_of_theta(perturbed_table.theta_of_r(r))
    assert np.max(np.abs(back - r)) < 1e-10 * P


def test_arclength_matches_gauss_quadrature_of_curvature_radius(perturbed_table):
    t = perturbed_table
    P = t.perimeter
    for th in (0.3, 2.0, 4.5, TWO_PI):
        x, w = np.polynomial.legendre.leggauss(200)
        ref = 0.5 * th * float(np.dot(w, t.rho(0.5 * th * (x + 1.0))))
        assert abs(float(arclength(t.h, th)) - ref) < 1e-12 * P


def test_arclength_lift_adds_perimeter(perturbed_table):
    t = perturbed_table
    assert float(t.r_of_theta(1.0 + TWO_PI)) == pytest.approx(float(t.r_of_theta(1.0)) + t.perimeter,
                                                             abs=1e-12)


# ------------------------------------------------------------- config

def test_config_forms():
    assert table_from_config({"circle": {"radius": 2.0}}).perimeter == pytest.approx(2 * TWO_PI)
    h = support_from_config({"ellipse": {"a": 1.0, "b": 0.7071067811865476},
                             "perturbation": {"eps": 0.005, "mode": 3, "kind": "cos"}})
    assert h == perturbed_ellipse(1.0, 0.7071067811865476, 0.005)
    raw = support_from_config({"a0": 1.0, "harmonics": [[3, 0.01, 0.0]]})
    assert raw == cos3(0.01)


# ------------------------------------------------------------- properties

@settings(max_examples=30, deadline=None)
@given(convex_support(), st.floats(0.0, TWO_PI))
def test_position_derivative_is_rho_times_tangent(h, th):
    t = Table(h)
    hstep = 1e-5
    d = (t.position(th + hstep) - t.position(th - hstep)) / (2 * hstep)
    expect = float(t.rho(th)) * t.tangent(th)
    assert np.max(np.abs(d - expect)) < 1e-6


@settings(max_examples=30, deadline=None)
@given(convex_support())
def test_arclength_is_increasing_bijection(h):
    t = Table(h)
    th = np.linspace(0.0, TWO_PI, 4097)
    r = t.r_of_theta(th)
    assert np.all(np.diff(r) > 0)
    assert r[0] == 0.0
    assert r[-1] == pytest.approx(t.perimeter, rel=1e-14)


@settings(max_examples=30, deadline=None)
@given(convex_support(), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.floats(0.0, TWO_PI))
def test_translation_via_first_harmonic(h, c1, c2, th):
    t0 = Table(h)
    t1 = Table(h.plus(SupportFunction(0.0, ((1, c1, c2),))))
    assert np.allclose(t1.position(th) - t0.position(th), [c1, c2], atol=1e-13)
    assert float(t1.rho(th)) == pytest.approx(float(t0.rho(th)), abs=1e-13)
