"""Convex billiards from support functions.

Tables, the billiard map, periodic orbits, invariant manifolds of hyperbolic
orbits, homoclinic and heteroclinic detection, and a scenario runner.
"""
__version__ = "0.1.0"

from ._core import BACKEND  # noqa: E402
from .billiard_map import (BilliardMap, PhasePoint, SolverFail, Tangency,  # noqa: E402
                           ellipse_focal_invariant, iterate, jacobian, step, twist_defect)
from .diagnostics import (ContinuationLost, bifurcation_trace,  # noqa: E402
                          lazutkin_band_check, rotation_fluctuation, rotation_number)
from .homoclinic_detection import (HomoclinicReport, Thresholds, classify_pair,  # noqa: E402
                                   heteroclinic_scan, homoclinic_reports, intersect_polylines,
                                   refine_crossing)
from .invariant_manifolds import (Budget, HyperbolicFixture, Inconclusive,  # noqa: E402
                                  ManifoldBranch, NotHyperbolic, linearize,
                                  quadrant_accumulation, recurrence_diagnostic, seed_and_grow)
from .periodic_orbits import (PeriodicOrbit, classify, enumerate_orbits,  # noqa: E402
                              find_orbit, mirror_trace)
from .table import (NotConvex, SupportFunction, Table, circle, ellipse,  # noqa: E402
                    perturbed_ellipse, table_from_config)

__all__ = [
    "__version__", "BACKEND",
    "SupportFunction", "Table", "NotConvex", "circle", "ellipse", "perturbed_ellipse",
    "table_from_config",
    "BilliardMap", "PhasePoint", "Tangency", "SolverFail", "step", "jacobian", "iterate",
    "twist_defect", "ellipse_focal_invariant",
    "PeriodicOrbit", "find_orbit", "classify", "enumerate_orbits", "mirror_trace",
    "Budget", "HyperbolicFixture", "ManifoldBranch", "NotHyperbolic", "Inconclusive",
    "linearize", "seed_and_grow", "recurrence_diagnostic", "quadrant_accumulation",
    "Thresholds", "HomoclinicReport", "intersect_polylines", "refine_crossing", "classify_pair",
    "homoclinic_reports", "heteroclinic_scan",
    "ContinuationLost", "rotation_number", "rotation_fluctuation", "lazutkin_band_check",
    "bifurcation_trace",
]
