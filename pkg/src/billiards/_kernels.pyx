# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; same API as ``_fallback``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, asin, sqrt, floor, fabs, M_PI, isfinite
from libc.stdlib cimport malloc, free

cnp.import_array()

BACKEND = "cython"

cdef double TWO_PI = 2.0 * M_PI
cdef double TANGENCY_GUARD = 1.0 - 1e-9
cdef int MAX_NEWTON = 80


cdef struct Table:
    double a0
    int m
    int kmax
    long *ks
    double *ak
    double *bk
    double *cbuf
    double *sbuf


cdef inline void _jet(Table *t, double theta, double *h, double *h1,
                      double *h2, double *h3) noexcept nogil:
    cdef double c1 = cos(theta), s1 = sin(theta)
    cdef double ck = 1.0, sk = 0.0, tmp
    cdef int k, j
    # cos k theta, sin k theta by angle addition up to kmax
    for k in range(1, t.kmax + 1):
        tmp = ck * c1 - sk * s1
        sk = sk * c1 + ck * s1
        ck = tmp
        t.cbuf[k] = ck
        t.sbuf[k] = sk
    cdef double vh = t.a0, v1 = 0.0, v2 = 0.0, v3 = 0.0, cs, sc, kk
    for j in range(t.m):
        k = t.ks[j]
        kk = <double>k
        cs = t.cbuf[k] * t.ak[j] + t.sbuf[k] * t.bk[j]
        sc = -t.sbuf[k] * t.ak[j] + t.cbuf[k] * t.bk[j]
        vh += cs
        v1 += kk * sc
        v2 -= kk * kk * cs
        v3 -= kk * kk * kk * sc
    h[0] = vh
    h1[0] = v1
    h2[0] = v2
    h3[0] = v3


cdef inline int _step1(Table *t, double th_in, double s, double *th_out,
                       double *s_out) noexcept nogil:
    if not (fabs(s) < TANGENCY_GUARD):
        return 0
    cdef double base = floor(th_in / TWO_PI) * TWO_PI
    cdef double th = th_in - base
    cdef double phi = asin(s)
    cdef double cphi = sqrt((1.0 - s) * (1.0 + s))
    cdef double h, h1, h2, h3
    _jet(t, th, &h, &h1, &h2, &h3)
    cdef double c = -h * s - h1 * cphi
    # unknown d: offset of the far endpoint from the direction alpha, |d| < pi/2;
    # working in d keeps s1 = -sin(d) free of cancellation near pi
    cdef double alpha = th + M_PI - phi
    cdef double lo = -0.5 * M_PI, hi = 0.5 * M_PI
    cdef double d = -phi
    cdef double dn, f, fp, sd, cd
    cdef int it
    for it in range(MAX_NEWTON):
        _jet(t, alpha + d, &h, &h1, &h2, &h3)
        sd = sin(d)
        cd = cos(d)
        f = h * sd + h1 * cd - c
        fp = (h + h2) * cd
        if f == 0.0:
            break
        if f < 0.0:
            lo = d
        else:
            hi = d
        dn = d - f / fp
        # a converged step may round onto the bracket end; take it anyway
        if fabs(dn - d) <= 4e-16 * (1.0 + fabs(d)):
            if isfinite(dn):
                d = dn
            break
        if (not isfinite(dn)) or dn <= lo or dn >= hi:
            dn = 0.5 * (lo + hi)
        if hi - lo <= 8e-16 * (1.0 + fabs(d)):
            d = dn
            break
        d = dn
    th_out[0] = th_in + ((M_PI - phi) + d)
    s_out[0] = -sin(d)
    return 1


cdef int _setup(Table *t, double a0, long[::1] ks, double[::1] ak, double[::1] bk) except -1:
    t.a0 = a0
    t.m = ks.shape[0]
    t.ks = &ks[0] if t.m > 0 else NULL
    t.ak = &ak[0] if t.m > 0 else NULL
    t.bk = &bk[0] if t.m > 0 else NULL
    t.kmax = 0
    cdef int j
    for j in range(t.m):
        if ks[j] > t.kmax:
            t.kmax = ks[j]
    t.cbuf = <double *> malloc((t.kmax + 1) * sizeof(double))
    t.sbuf = <double *> malloc((t.kmax + 1) * sizeof(double))
    if t.cbuf == NULL or t.sbuf == NULL:
        raise MemoryError()
    return 0


cdef void _teardown(Table *t) noexcept:
    free(t.cbuf)
    free(t.sbuf)


def _arrays(ks, ak, bk):
    return (np.ascontiguousarray(ks, dtype=np.int64),
            np.ascontiguousarray(ak, dtype=np.float64),
            np.ascontiguousarray(bk, dtype=np.float64))


def support_jet(double a0, ks, ak, bk, theta):
    cdef long[::1] kv
    cdef double[::1] av, bv
    kv, av, bv = _arrays(ks, ak, bk)
    th = np.asarray(theta, dtype=np.float64)
    shape = th.shape
    cdef double[::1] x = np.ascontiguousarray(th.ravel())
    cdef Py_ssize_t n = x.shape[0], i
    out = np.empty((4, n))
    cdef double[:, ::1] o = out
    cdef Table t
    _setup(&t, a0, kv, av, bv)
    try:
        with nogil:
            for i in range(n):
                _jet(&t, x[i], &o[0, i], &o[1, i], &o[2, i], &o[3, i])
    finally:
        _teardown(&t)
    return tuple(out[j].reshape(shape) for j in range(4))


def step(double a0, ks, ak, bk, theta, s):
    cdef long[::1] kv
    cdef double[::1] av, bv
    kv, av, bv = _arrays(ks, ak, bk)
    cdef double[::1] th = np.ascontiguousarray(np.atleast_1d(theta), dtype=np.float64)
    cdef double[::1] sv = np.ascontiguousarray(np.atleast_1d(s), dtype=np.float64)
    cdef Py_ssize_t n = th.shape[0], i
    th1 = np.full(n, np.nan)
    s1 = np.full(n, np.nan)
    ok = np.zeros(n, dtype=np.uint8)
    cdef double[::1] o1 = th1, o2 = s1
    cdef unsigned char[::1] okv = ok
    cdef Table t
    _setup(&t, a0, kv, av, bv)
    try:
        with nogil:
            for i in range(n):
                okv[i] = _step1(&t, th[i], sv[i], &o1[i], &o2[i])
    finally:
        _teardown(&t)
    return th1, s1, ok.astype(bool)


def orbit(double a0, ks, ak, bk, double theta0, double s0, Py_ssize_t n):
    cdef long[::1] kv
    cdef double[::1] av, bv
    kv, av, bv = _arrays(ks, ak, bk)
    thetas = np.empty(n + 1)
    ss = np.empty(n + 1)
    cdef double[::1] tv = thetas, svv = ss
    tv[0] = theta0
    svv[0] = s0
    cdef double turns = floor(theta0 / TWO_PI)
    cdef double th = theta0 - turns * TWO_PI, s = s0, t1, s1, k
    cdef Py_ssize_t i, count = n + 1
    cdef Table t
    _setup(&t, a0, kv, av, bv)
    try:
        with nogil:
            for i in range(1, n + 1):
                if not _step1(&t, th, s, &t1, &s1):
                    count = i
                    break
                th = t1
                s = s1
                k = floor(th / TWO_PI)
                turns += k
                th -= k * TWO_PI
                tv[i] = th + turns * TWO_PI
                svv[i] = s
    finally:
        _teardown(&t)
    return thetas, ss, count


def bbox_pairs(ax0, ay0, ax1, ay1, bx0, by0, bx1, by1):
    cdef double[::1] axlo = np.minimum(ax0, ax1), axhi = np.maximum(ax0, ax1)
    cdef double[::1] aylo = np.minimum(ay0, ay1), ayhi = np.maximum(ay0, ay1)
    cdef double[::1] bxlo = np.minimum(bx0, bx1), bxhi = np.maximum(bx0, bx1)
    cdef double[::1] bylo = np.minimum(by0, by1), byhi = np.maximum(by0, by1)
    cdef Py_ssize_t na = axlo.shape[0], nb = bxlo.shape[0]
    events_np = np.concatenate([np.asarray(axlo), np.asarray(bxlo)])
    cdef long[::1] order = np.argsort(events_np, kind="stable").astype(np.int64)
    cdef double[::1] events = events_np
    cdef long[::1] act_a = np.empty(max(na, 1), dtype=np.int64)
    cdef long[::1] act_b = np.empty(max(nb, 1), dtype=np.int64)
    cdef Py_ssize_t n_a = 0, n_b = 0, q, q2, w, e, i, j
    cdef double x
    out_i = []
    out_j = []
    for q in range(na + nb):
        e = order[q]
        x = events[e]
        if e < na:
            i = e
            w = 0
            for q2 in range(n_b):
                j = act_b[q2]
                if bxhi[j] >= x:
                    act_b[w] = j
                    w += 1
                    if bylo[j] <= ayhi[i] and aylo[i] <= byhi[j]:
                        out_i.append(i)
                        out_j.append(j)
            n_b = w
            act_a[n_a] = i
            n_a += 1
        else:
            j = e - na
            w = 0
            for q2 in range(n_a):
                i = act_a[q2]
                if axhi[i] >= x:
                    act_a[w] = i
                    w += 1
                    if bylo[j] <= ayhi[i] and aylo[i] <= byhi[j]:
                        out_i.append(i)
                        out_j.append(j)
            n_a = w
            act_b[n_b] = j
            n_b += 1
    return np.asarray(out_i, dtype=np.int64), np.asarray(out_j, dtype=np.int64)
