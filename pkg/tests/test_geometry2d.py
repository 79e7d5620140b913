import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from billiards import geometry2d as g2


def _arr(*xs):
    return [np.array([x], dtype=float) for x in xs]


def test_orientation_signs():
    assert g2.orient_sign(*_arr(0, 0, 1, 0, 0, 1))[0] == 1
    assert g2.orient_sign(*_arr(0, 0, 1, 0, 0, -1))[0] == -1
    # collinear ties break to +1
    assert g2.orient_sign(*_arr(0, 0, 1, 1, 2, 2))[0] == 1


def test_exact_fallback_decides_near_degenerate_case():
    # c is a hair off the line through a and b; doubles cannot see it in the naive product
    a, b = (0.5, 0.5), (12.0, 12.0)
    c = (24.0, np.nextafter(24.0, 25.0))
    assert g2._exact_orient(*a, *b, *c) == 1
    assert g2.orient_sign(*_arr(*a, *b, *c))[0] == 1
    c = (24.0, np.nextafter(24.0, 23.0))
    assert g2.orient_sign(*_arr(*a, *b, *c))[0] == -1


def test_simple_cross_and_touch():
    p0 = np.array([[0.0, 0.0]])
    p1 = np.array([[1.0, 1.0]])
    assert g2.segments_cross(p0, p1, np.array([[0.0, 1.0]]), np.array([[1.0, 0.0]]))[0]
    assert not g2.segments_cross(p0, p1, np.array([[2.0, 0.0]]), np.array([[3.0, 1.0]]))[0]
    a, b = g2.intersection_params(p0, p1, np.array([[0.0, 1.0]]), np.array([[1.0, 0.0]]))
    assert a[0] == 0.5 and b[0] == 0.5


def test_shared_vertex_counted_once():
    # a polyline passing exactly through a vertex of the other one
    P = np.array([[-1.0, 0.0], [0.0, 0.0], [1.0, 0.0]])
    Q = np.array([[0.0, -1.0], [0.0, 1.0]])
    I, _ = g2.crossing_pairs(P, Q, brute=True)
    assert I.size == 1


def test_segment_angle():
    assert g2.segment_angle(np.array([1.0, 0.0]), np.array([0.0, 2.0])) == np.pi / 2
    assert g2.segment_angle(np.array([1.0, 1.0]), np.array([-1.0, -1.0])) == 0.0


def test_short_inputs():
    I, J = g2.crossing_pairs(np.zeros((1, 2)), np.zeros((5, 2)))
    assert I.size == 0 and J.size == 0


walks = st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1)), min_size=2, max_size=40)


@settings(max_examples=60, deadline=None)
@given(walks, walks)
def test_sweep_agrees_with_brute_force(a, b):
    P = np.cumsum(np.array(a), axis=0)
    Q = np.cumsum(np.array(b), axis=0)
    fast = set(zip(*map(list, g2.crossing_pairs(P, Q))))
    slow = set(zip(*map(list, g2.crossing_pairs(P, Q, brute=True))))
    assert fast == slow


@settings(max_examples=40, deadline=None)
@given(walks, st.integers(0, 10_000))
def test_closed_loops_cross_evenly(a, seed):
    rng = np.random.default_rng(seed)
    P = np.cumsum(np.array(a), axis=0)
    P = np.vstack([P, P[:1]])
    Q = rng.normal(size=(12, 2))
    Q = np.vstack([Q, Q[:1]]) + 1e-9 * np.array([0.7548, 0.5698])
    I, _ = g2.crossing_pairs(P, Q)
    assert I.size % 2 == 0
