import math
import time

import pytest

from billiards import Budget, Table, circle, ellipse, find_orbit, perturbed_ellipse
from billiards.homoclinic_detection import grow_orbit_branches, homoclinic_reports

B_PAPER = 1.0 / math.sqrt(2.0)      # the x^2 + 2y^2 <= 1 table

# wall time of the expensive session fixtures, for the acceptance runtime limits
TIMINGS = {}


def _timed(name, fn, *args):
    t0 = time.perf_counter()
    out = fn(*args)
    TIMINGS[name] = time.perf_counter() - t0
    return out


@pytest.fixture(scope="session")
def circle_table():
    return Table(circle(1.0))


@pytest.fixture(scope="session")
def ellipse_table():
    return Table(ellipse(1.0, B_PAPER))


@pytest.fixture(scope="session")
def perturbed_table():
    return Table(perturbed_ellipse(1.0, B_PAPER, 0.005))


@pytest.fixture(scope="session")
def tables(circle_table, ellipse_table, perturbed_table):
    return {"circle": circle_table, "ellipse": ellipse_table, "perturbed": perturbed_table}


@pytest.fixture(scope="session")
def ellipse_major(ellipse_table):
    return find_orbit(ellipse_table, (1, 2), [0.0, math.pi])


@pytest.fixture(scope="session")
def perturbed_major(perturbed_table):
    return find_orbit(perturbed_table, (1, 2), [0.0, math.pi])


@pytest.fixture(scope="session")
def ellipse_branches(ellipse_table, ellipse_major):
    return _timed("ellipse_branches", grow_orbit_branches, ellipse_table, ellipse_major,
                  Budget(4, 8.0))


@pytest.fixture(scope="session")
def perturbed_branches(perturbed_table, perturbed_major):
    return _timed("perturbed_branches", grow_orbit_branches, perturbed_table, perturbed_major,
                  Budget(12, 20.0))


@pytest.fixture(scope="session")
def perturbed_reports(perturbed_branches):
    return _timed("perturbed_reports", homoclinic_reports, perturbed_branches, None,
                  Budget(12, 20.0))


@pytest.fixture(scope="session")
def ellipse_reports(ellipse_branches):
    return _timed("ellipse_reports", homoclinic_reports, ellipse_branches, None, Budget(4, 8.0))
