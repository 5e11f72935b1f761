# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled orbit kernels.

Both kernels walk one orbit, bin each visited point into a flat C-order
grid cell, and copy the running visit counts at every checkpoint. The
arithmetic is written in the same order as ``_pykernels`` so that the two
backends produce bit-identical orbits.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, exp, isfinite, INFINITY

cnp.import_array()

cdef enum:
    MAXDIM = 8

STATUS_OK = 0
STATUS_NONFINITE = 1
STATUS_OUTSIDE = 2


cdef inline long _cell_index(const double* pt, const double* lo,
                             const double* length, const cnp.int64_t* res,
                             int d) noexcept nogil:
    cdef long flat = 0
    cdef long i
    cdef int k
    for k in range(d):
        i = <long>floor((pt[k] - lo[k]) * res[k] / length[k])
        if i < 0:
            i = 0
        elif i >= res[k]:
            i = res[k] - 1
        flat = flat * res[k] + i
    return flat


cdef inline double _wrap(double x, double lo, double length) noexcept nogil:
    cdef double t = x - lo
    t = t - length * floor(t / length)
    if t >= length:
        t = t - length
    return lo + t


def affine_orbit(double[::1] x0, double[:, ::1] matrix, double[::1] offset,
                 double[::1] lo, double[::1] length,
                 cnp.uint8_t[::1] periodic, cnp.int64_t[::1] res,
                 long burn_in, cnp.int64_t[::1] checkpoints, cnp.int64_t[:, ::1] counts_out):
    """Run x -> matrix @ x + offset (wrapped on periodic axes).

    Returns ``(final_state, status, failing_index)``.
    """
    cdef int d = x0.shape[0]
    cdef long ncheck = checkpoints.shape[0]
    cdef long ncell = counts_out.shape[1]
    cdef long horizon = checkpoints[ncheck - 1] if ncheck > 0 else 0
    cdef double cur[MAXDIM]
    cdef double nxt[MAXDIM]
    cdef double acc
    cdef long n, j, c, kk = 0
    cdef int i, k
    cdef int status = 0
    cdef long fail_at = -1
    cdef cnp.int64_t[::1] counts = np.zeros(ncell, dtype=np.int64)
    cdef double hi

    if d > MAXDIM:
        raise ValueError("dimension too large for kernel")
    for i in range(d):
        cur[i] = x0[i]

    with nogil:
        for n in range(burn_in + horizon):
            if n >= burn_in:
                c = _cell_index(cur, &lo[0], &length[0], &res[0], d)
                counts[c] += 1
                if n - burn_in + 1 == checkpoints[kk]:
                    for j in range(ncell):
                        counts_out[kk, j] = counts[j]
                    kk += 1
                    if kk == ncheck:
                        break
            for i in range(d):
                acc = 0.0
                for k in range(d):
                    acc = acc + matrix[i, k] * cur[k]
                nxt[i] = acc + offset[i]
            for i in range(d):
                if not isfinite(nxt[i]):
                    status = 1
                    break
                if periodic[i]:
                    nxt[i] = _wrap(nxt[i], lo[i], length[i])
                else:
                    hi = lo[i] + length[i]
                    if nxt[i] < lo[i] or nxt[i] > hi:
                        status = 2
                        break
                cur[i] = nxt[i]
            if status != 0:
                fail_at = n + 1
                break

    final = np.empty(d, dtype=np.float64)
    for i in range(d):
        final[i] = cur[i]
    return final, status, fail_at


cdef inline void _bowen_field(double x, double p, double q, double sp, double sm,
                              double alpha, double beta,
                              double* dx, double* dp, double* dq) noexcept nogil:
    cdef double a = 1.0 + alpha * x
    cdef double b = 1.0 - beta * x
    dx[0] = a * sm * exp(q) + b * sp * exp(p)
    dp[0] = 4.0 * x * b
    dq[0] = -4.0 * x * a


cdef inline void _bowen_rk4(double* s, double sp, double sm, double alpha,
                            double beta, double dt, long substeps) noexcept nogil:
    cdef double x = s[0]
    cdef double p = s[1]
    cdef double q = s[2]
    cdef double k1x, k1p, k1q, k2x, k2p, k2q, k3x, k3p, k3q, k4x, k4p, k4q
    cdef double h2 = 0.5 * dt
    cdef double h6 = dt / 6.0
    cdef long it
    for it in range(substeps):
        _bowen_field(x, p, q, sp, sm, alpha, beta, &k1x, &k1p, &k1q)
        _bowen_field(x + h2 * k1x, p + h2 * k1p, q + h2 * k1q, sp, sm,
                     alpha, beta, &k2x, &k2p, &k2q)
        _bowen_field(x + h2 * k2x, p + h2 * k2p, q + h2 * k2q, sp, sm,
                     alpha, beta, &k3x, &k3p, &k3q)
        _bowen_field(x + dt * k3x, p + dt * k3p, q + dt * k3q, sp, sm,
                     alpha, beta, &k4x, &k4p, &k4q)
        x = x + h6 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        p = p + h6 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        q = q + h6 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q)
        if x > 1.0:
            x = 1.0
        elif x < -1.0:
            x = -1.0
        if p > 0.6931471805599453:
            p = 0.6931471805599453
        if q > 0.6931471805599453:
            q = 0.6931471805599453
    s[0] = x
    s[1] = p
    s[2] = q


def bowen_orbit(double[::1] state0, double alpha, double beta, double dt,
                long substeps, double[::1] lo, double[::1] length, cnp.int64_t[::1] res,
                long burn_in, cnp.int64_t[::1] checkpoints, cnp.int64_t[:, ::1] counts_out):
    """Run the time-h map of the heteroclinic-cycle flow in log coordinates.

    ``state0`` is ``(x, log|u+|, log|u-|, sign u+, sign u-)``.
    Returns ``(final_state, status, failing_index)``.
    """
    cdef long ncheck = checkpoints.shape[0]
    cdef long ncell = counts_out.shape[1]
    cdef long horizon = checkpoints[ncheck - 1] if ncheck > 0 else 0
    cdef double s[3]
    cdef double sp = state0[3]
    cdef double sm = state0[4]
    cdef double pt[2]
    cdef long n, j, c, kk = 0
    cdef int status = 0
    cdef long fail_at = -1
    cdef cnp.int64_t[::1] counts = np.zeros(ncell, dtype=np.int64)

    s[0] = state0[0]
    s[1] = state0[1]
    s[2] = state0[2]

    with nogil:
        for n in range(burn_in + horizon):
            if n >= burn_in:
                pt[0] = s[0]
                pt[1] = 0.5 * (sp * exp(s[1]) + sm * exp(s[2]))
                c = _cell_index(pt, &lo[0], &length[0], &res[0], 2)
                counts[c] += 1
                if n - burn_in + 1 == checkpoints[kk]:
                    for j in range(ncell):
                        counts_out[kk, j] = counts[j]
                    kk += 1
                    if kk == ncheck:
                        break
            _bowen_rk4(s, sp, sm, alpha, beta, dt, substeps)
            if not isfinite(s[0]) or s[1] != s[1] or s[2] != s[2]:
                status = 1
                fail_at = n + 1
                break

    final = np.array([s[0], s[1], s[2], sp, sm], dtype=np.float64)
    return final, status, fail_at


def affine_many(double[:, ::1] pts, double[:, ::1] matrix, double[::1] offset,
                double[::1] lo, double[::1] length, cnp.uint8_t[::1] periodic, long n):
    """Iterate every row of ``pts`` in place ``n`` times.

    Returns the number of visited points (row, step) that fall outside the
    domain after wrapping, counting non-finite values as outside.
    """
    cdef long m = pts.shape[0]
    cdef int d = pts.shape[1]
    cdef double cur[MAXDIM]
    cdef double nxt[MAXDIM]
    cdef double acc, hi
    cdef long r, s, bad = 0
    cdef int i, k, out
    if d > MAXDIM:
        raise ValueError("dimension too large for kernel")
    with nogil:
        for r in range(m):
            for i in range(d):
                cur[i] = pts[r, i]
            for s in range(n):
                for i in range(d):
                    acc = 0.0
                    for k in range(d):
                        acc = acc + matrix[i, k] * cur[k]
                    nxt[i] = acc + offset[i]
                out = 0
                for i in range(d):
                    if periodic[i]:
                        nxt[i] = _wrap(nxt[i], lo[i], length[i])
                    hi = lo[i] + length[i]
                    if not isfinite(nxt[i]) or nxt[i] < lo[i] or nxt[i] > hi \
                            or (periodic[i] and nxt[i] >= hi):
                        out = 1
                    cur[i] = nxt[i]
                bad += out
            for i in range(d):
                pts[r, i] = cur[i]
    return bad
