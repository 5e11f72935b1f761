"""Pure-Python orbit kernels.

Same signatures and the same floating-point operation order as the compiled
``_ckernels`` module, so either backend yields bit-identical counts.
"""

from math import exp, floor, isfinite

import numpy as np

STATUS_OK = 0
STATUS_NONFINITE = 1
STATUS_OUTSIDE = 2

_LN2 = 0.6931471805599453


def _cell_index(pt, lo, length, res):
    flat = 0
    for k in range(len(pt)):
        i = int(floor((pt[k] - lo[k]) * res[k] / length[k]))
        if i < 0:
            i = 0
        elif i >= res[k]:
            i = res[k] - 1
        flat = flat * res[k] + i
    return flat


def _wrap(x, lo, length):
    t = x - lo
    t = t - length * floor(t / length)
    if t >= length:
        t = t - length
    return lo + t


def affine_orbit(x0, matrix, offset, lo, length, periodic, res,
                 burn_in, checkpoints, counts_out):
    d = len(x0)
    cur = [float(v) for v in x0]
    mat = [[float(v) for v in row] for row in matrix]
    off = [float(v) for v in offset]
    lo_ = [float(v) for v in lo]
    len_ = [float(v) for v in length]
    per = [bool(v) for v in periodic]
    res_ = [int(v) for v in res]
    checks = [int(v) for v in checkpoints]
    ncheck = len(checks)
    horizon = checks[-1] if ncheck else 0
    counts = np.zeros(counts_out.shape[1], dtype=np.int64)
    status = STATUS_OK
    fail_at = -1
    kk = 0
    rows = range(d)

    for n in range(burn_in + horizon):
        if n >= burn_in:
            counts[_cell_index(cur, lo_, len_, res_)] += 1
            if n - burn_in + 1 == checks[kk]:
                counts_out[kk, :] = counts
                kk += 1
                if kk == ncheck:
                    break
        nxt = []
        for i in rows:
            acc = 0.0
            row = mat[i]
            for k in rows:
                acc = acc + row[k] * cur[k]
            nxt.append(acc + off[i])
        for i in rows:
            v = nxt[i]
            if not isfinite(v):
                status = STATUS_NONFINITE
                break
            if per[i]:
                v = _wrap(v, lo_[i], len_[i])
            elif v < lo_[i] or v > lo_[i] + len_[i]:
                status = STATUS_OUTSIDE
                break
            cur[i] = v
        if status != STATUS_OK:
            fail_at = n + 1
            break

    return np.array(cur, dtype=np.float64), status, fail_at


def _bowen_field(x, p, q, sp, sm, alpha, beta):
    a = 1.0 + alpha * x
    b = 1.0 - beta * x
    return (a * sm * exp(q) + b * sp * exp(p), 4.0 * x * b, -4.0 * x * a)


def _bowen_rk4(x, p, q, sp, sm, alpha, beta, dt, substeps):
    h2 = 0.5 * dt
    h6 = dt / 6.0
    field = _bowen_field
    for _ in range(substeps):
        k1x, k1p, k1q = field(x, p, q, sp, sm, alpha, beta)
        k2x, k2p, k2q = field(x + h2 * k1x, p + h2 * k1p, q + h2 * k1q,
                              sp, sm, alpha, beta)
        k3x, k3p, k3q = field(x + h2 * k2x, p + h2 * k2p, q + h2 * k2q,
                              sp, sm, alpha, beta)
        k4x, k4p, k4q = field(x + dt * k3x, p + dt * k3p, q + dt * k3q,
                              sp, sm, alpha, beta)
        x = x + h6 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        p = p + h6 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        q = q + h6 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q)
        if x > 1.0:
            x = 1.0
        elif x < -1.0:
            x = -1.0
        if p > _LN2:
            p = _LN2
        if q > _LN2:
            q = _LN2
    return x, p, q


def bowen_orbit(state0, alpha, beta, dt, substeps, lo, length, res,
                burn_in, checkpoints, counts_out):
    x, p, q, sp, sm = (float(v) for v in state0)
    lo_ = [float(v) for v in lo]
    len_ = [float(v) for v in length]
    res_ = [int(v) for v in res]
    checks = [int(v) for v in checkpoints]
    ncheck = len(checks)
    horizon = checks[-1] if ncheck else 0
    counts = np.zeros(counts_out.shape[1], dtype=np.int64)
    status = STATUS_OK
    fail_at = -1
    kk = 0

    for n in range(burn_in + horizon):
        if n >= burn_in:
            pt = (x, 0.5 * (sp * exp(p) + sm * exp(q)))
            counts[_cell_index(pt, lo_, len_, res_)] += 1
            if n - burn_in + 1 == checks[kk]:
                counts_out[kk, :] = counts
                kk += 1
                if kk == ncheck:
                    break
        x, p, q = _bowen_rk4(x, p, q, sp, sm, alpha, beta, dt, substeps)
        if not isfinite(x) or p != p or q != q:
            status = STATUS_NONFINITE
            fail_at = n + 1
            break

    return np.array([x, p, q, sp, sm], dtype=np.float64), status, fail_at


def affine_many(pts, matrix, offset, lo, length, periodic, n):
    # vectorized over rows; same per-element operation order as the scalar kernel
    m, d = pts.shape
    mat = np.asarray(matrix, dtype=np.float64)
    lo = np.asarray(lo, dtype=np.float64)
    length = np.asarray(length, dtype=np.float64)
    per = np.asarray(periodic, dtype=bool)
    hi = lo + length
    bad = 0
    x = pts.copy()
    for _ in range(n):
        nxt = np.empty_like(x)
        for i in range(d):
            acc = np.zeros(m)
            for k in range(d):
                acc = acc + mat[i, k] * x[:, k]
            nxt[:, i] = acc + offset[i]
        out = np.zeros(m, dtype=bool)
        for i in range(d):
            v = nxt[:, i]
            if per[i]:
                t = v - lo[i]
                t = t - length[i] * np.floor(t / length[i])
                t = np.where(t >= length[i], t - length[i], t)
                v = lo[i] + t
                nxt[:, i] = v
                out |= v >= hi[i]
            with np.errstate(invalid="ignore"):
                out |= ~np.isfinite(v) | (v < lo[i]) | (v > hi[i])
        bad += int(np.count_nonzero(out))
        x = nxt
    pts[...] = x
    return bad
