"""Compare the compiled kernels with the numpy fallback.

Run ``python3 benchmarks/bench_kernels.py [--repeat N] [--json]``.  Each row
reports the best wall time of both backends, the speedup, and the largest
disagreement between their outputs.
"""
from __future__ import annotations

import argparse
import json
import math
import time

import numpy as np

from billiards import _fallback
from billiards.table import Table, perturbed_ellipse

try:
    from billiards import _kernels
except ImportError:  # extension not built
    _kernels = None


def best_of(fn, repeat):
    best, out = math.inf, None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def _diff(a, b):
    if isinstance(a, tuple):
        return max(_diff(x, y) for x, y in zip(a, b))
    a, b = np.asarray(a), np.asarray(b)
    if a.dtype.kind in "iub":
        return float(np.any(np.sort(a) != np.sort(b)))
    return float(np.max(np.abs(a - b))) if a.size else 0.0


def cases(table, rng):
    a = table.arrays
    th = rng.uniform(0, 2 * math.pi, 100_000)
    s = rng.uniform(-0.99, 0.99, 100_000)
    n = 20_000
    x0, y0 = rng.uniform(0, 10, n), rng.uniform(-1, 1, n)
    d = rng.normal(0, 0.01, (4, n))
    segs = (x0, y0, x0 + d[0], y0 + d[1], x0[::-1].copy(), y0[::-1].copy(),
            x0[::-1] + d[2], y0[::-1] + d[3])
    return [
        ("support_jet 1e5", lambda k: k.support_jet(*a, th)),
        ("step 1e5 points", lambda k: k.step(*a, th, s)[:2]),
        # rounding differences grow along a chaotic orbit, so compare the start only
        ("orbit 2e3 bounces", lambda k: tuple(x[:20] for x in k.orbit(*a, 0.3, 0.4, 2000)[:2])),
        ("bbox_pairs 2e4 x 2e4", lambda k: k.bbox_pairs(*segs)),
    ]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", action="store_true", help="machine-readable output")
    args = ap.parse_args(argv)
    if _kernels is None:
        raise SystemExit("compiled extension not available; build with pip install -e .")
    table = Table(perturbed_ellipse(1.0, 1.0 / math.sqrt(2.0), 0.005))
    rows = []
    for name, fn in cases(table, np.random.default_rng(0)):
        tc, oc = best_of(lambda: fn(_kernels), args.repeat)
        tp, op = best_of(lambda: fn(_fallback), args.repeat)
        rows.append({"case": name, "cython_s": tc, "python_s": tp, "speedup": tp / tc,
                     "max_abs_diff": _diff(oc, op)})
    if args.json:
        print(json.dumps(rows, indent=2))
        return
    print(f"{'case':24s} {'cython [s]':>11s} {'python [s]':>11s} {'speedup':>8s} {'max diff':>10s}")
    for r in rows:
        print(f"{r['case']:24s} {r['cython_s']:11.4f} {r['python_s']:11.4f} "
              f"{r['speedup']:8.1f} {r['max_abs_diff']:10.2e}")


if __name__ == "__main__":
    main()
