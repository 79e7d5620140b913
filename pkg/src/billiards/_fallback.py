"""Pure numpy implementation of the hot kernels.

Mirrors ``_kernels.pyx`` function for function; the compiled module is
preferred when it imports (see ``_core``).  All functions take the table as
the flat tuple ``(a0, ks, ak, bk)`` of Fourier data of the support function.
"""
import numpy as np

BACKEND = "python"

TWO_PI = 2.0 * np.pi
TANGENCY_GUARD = 1.0 - 1e-9
_MAX_NEWTON = 80


def support_jet(a0, ks, ak, bk, theta):
    """h, h', h'', h''' of the support function at ``theta`` (array)."""
    theta = np.asarray(theta, dtype=float)
    kt = np.multiply.outer(theta, ks)
    c = np.cos(kt)
    s = np.sin(kt)
    cs = c * ak + s * bk          # shape (..., m)
    sc = -s * ak + c * bk
    k = np.asarray(ks, dtype=float)
    h = a0 + cs.sum(axis=-1)
    h1 = (sc * k).sum(axis=-1)
    h2 = -(cs * k * k).sum(axis=-1)
    h3 = -(sc * k * k * k).sum(axis=-1)
    return h, h1, h2, h3


def _hit(a0, ks, ak, bk, th, phi, c):
    """Safeguarded Newton for the far chord endpoint, vectorized.

    The unknown is the offset ``d`` (|d| < pi/2) of the far endpoint's
    support angle from ``alpha = th + pi - phi``; returns ``d``.
    """
    alpha = th + np.pi - phi
    lo = np.full(th.shape, -0.5 * np.pi)
    hi = np.full(th.shape, 0.5 * np.pi)
    d = -np.asarray(phi, dtype=float).copy()
    active = np.ones(d.shape, dtype=bool)
    for _ in range(_MAX_NEWTON):
        if not active.any():
            break
        da = d[active]
        h, h1, h2, _ = support_jet(a0, ks, ak, bk, alpha[active] + da)
        sd = np.sin(da)
        cd = np.cos(da)
        f = h * sd + h1 * cd - c[active]
        fp = (h + h2) * cd
        neg = f < 0.0
        la = np.where(neg, da, lo[active])
        ha = np.where(neg, hi[active], da)
        with np.errstate(divide="ignore", invalid="ignore"):
            dn = da - f / fp
        # a converged step may round onto the bracket end; take it anyway
        conv = (np.abs(dn - da) <= 4e-16 * (1.0 + np.abs(da))) & np.isfinite(dn)
        zero = f == 0.0
        bad = ~np.isfinite(dn) | (dn <= la) | (dn >= ha)
        dn = np.where(bad & ~conv, 0.5 * (la + ha), dn)
        dn = np.where(zero, da, dn)
        done = conv | zero | (ha - la <= 8e-16 * (1.0 + np.abs(da)))
        lo[active] = la
        hi[active] = ha
        d[active] = dn
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    return d


def step(a0, ks, ak, bk, theta, s):
    """One billiard bounce in lifted (theta, s) coordinates.

    Returns ``(theta1, s1, ok)``; ``ok`` is False where ``|s|`` is inside
    the tangency guard band (those entries of the outputs are NaN).
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float)).copy()
    s = np.atleast_1d(np.asarray(s, dtype=float))
    ok = np.abs(s) < TANGENCY_GUARD
    th1 = np.full(theta.shape, np.nan)
    s1 = np.full(theta.shape, np.nan)
    if not ok.any():
        return th1, s1, ok
    t_in = theta[ok]
    sv = s[ok]
    base = np.floor(t_in / TWO_PI) * TWO_PI
    th = t_in - base
    phi = np.arcsin(sv)
    cphi = np.sqrt((1.0 - sv) * (1.0 + sv))
    h0, h01, _, _ = support_jet(a0, ks, ak, bk, th)
    c = -h0 * sv - h01 * cphi
    d = _hit(a0, ks, ak, bk, th, phi, c)
    th1[ok] = t_in + ((np.pi - phi) + d)
    s1[ok] = -np.sin(d)
    return th1, s1, ok


def orbit(a0, ks, ak, bk, theta0, s0, n):
    """Forward orbit of length ``n + 1``; stops early at tangency.

    Returns ``(thetas, ss, count)`` where ``count`` is the number of valid
    entries (``n + 1`` unless the guard band was entered).
    """
    thetas = np.empty(n + 1)
    ss = np.empty(n + 1)
    thetas[0] = theta0
    ss[0] = s0
    turns = np.floor(theta0 / TWO_PI)
    th = theta0 - turns * TWO_PI
    sv = s0
    for i in range(1, n + 1):
        t1, s1, ok = step(a0, ks, ak, bk, np.array([th]), np.array([sv]))
        if not ok[0]:
            return thetas, ss, i
        th = t1[0]
        sv = s1[0]
        k = np.floor(th / TWO_PI)
        turns += k
        th -= k * TWO_PI
        thetas[i] = th + turns * TWO_PI
        ss[i] = sv
    return thetas, ss, n + 1


def bbox_pairs(ax0, ay0, ax1, ay1, bx0, by0, bx1, by1):
    """Index pairs (i, j) whose segment bounding boxes overlap.

    Sort-and-sweep along x over both segment sets.
    """
    axlo = np.minimum(ax0, ax1)
    axhi = np.maximum(ax0, ax1)
    aylo = np.minimum(ay0, ay1)
    ayhi = np.maximum(ay0, ay1)
    bxlo = np.minimum(bx0, bx1)
    bxhi = np.maximum(bx0, bx1)
    bylo = np.minimum(by0, by1)
    byhi = np.maximum(by0, by1)
    na = len(axlo)
    events = np.concatenate([axlo, bxlo])
    order = np.argsort(events, kind="stable")
    active_a = []
    active_b = []
    out_i = []
    out_j = []
    for e in order:
        x = events[e]
        if e < na:
            i = int(e)
            active_b = [j for j in active_b if bxhi[j] >= x]
            for j in active_b:
                if bylo[j] <= ayhi[i] and aylo[i] <= byhi[j]:
                    out_i.append(i)
                    out_j.append(j)
            active_a.append(i)
        else:
            j = int(e) - na
            active_a = [i for i in active_a if axhi[i] >= x]
            for i in active_a:
                if bylo[j] <= ayhi[i] and aylo[i] <= byhi[j]:
                    out_i.append(i)
                    out_j.append(j)
            active_b.append(j)
    return np.asarray(out_i, dtype=np.int64), np.asarray(out_j, dtype=np.int64)
