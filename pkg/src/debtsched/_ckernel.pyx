# cython: language_level=3
"""Compiled hot kernels. Must stay operation-for-operation identical to _pykernel.py."""

import numpy as np

from libc.math cimport sqrt, log, fabs

cdef enum:
    MAX_CLIENTS = 64

cdef double _LOGLOG_FLOOR = log(log(16.0))


cdef inline double _phi(long long t) nogil:
    if t >= 16:
        return sqrt(2.0 * <double>t * log(log(<double>t)))
    return sqrt(2.0 * <double>t * _LOGLOG_FLOOR)


def phi(long long t):
    return _phi(t)


def convolve_geometric(double[::1] mass, double overflow, double p):
    cdef Py_ssize_t tau = mass.shape[0] - 1
    cdef double fail = 1.0 - p
    cdef double[::1] geo = np.zeros(tau + 1)
    cdef double[::1] tail = np.ones(tau + 1)
    new_arr = np.zeros(tau + 1)
    cdef double[::1] new = new_arr
    cdef Py_ssize_t j, k
    cdef double acc, spill
    for j in range(1, tau + 1):
        geo[j] = p * tail[j - 1]
        tail[j] = tail[j - 1] * fail
    for k in range(1, tau + 1):
        acc = 0.0
        for j in range(1, k + 1):
            acc += mass[k - j] * geo[j]
        new[k] = acc
    spill = 0.0
    for k in range(tau + 1):
        spill += mass[k] * tail[tau - k]
    return new_arr, overflow + spill


cdef inline bint _before(double wa, double ta, double wb, double tb) nogil:
    # a precedes b: larger primary value first, then smaller tie key
    return wa > wb or (wa == wb and ta < tb)


def run_frames(
    long long t0, long long n_frames, int tau,
    double[::1] p, double[::1] q, double[::1] alpha,
    int policy_code, long long[::1] fixed, int tie_random,
    double[::1] uniforms, double[::1] keys,
    long long[::1] s, long long[::1] att, long long[::1] idle_total,
    long long t_first, long long t_last, long long stride,
    long long[::1] rec_t, long long[:, ::1] rec_s, long long[:, ::1] rec_att,
    long long[:, ::1] rec_u, long long[:, ::1] rec_g,
    long long[::1] rec_idle, long long[::1] rec_idle_total, long long[::1] rec_pos,
    long long t_min, double[::1] dmax, double[::1] dmin, double[::1] mmax, double[::1] ext,
    long long[::1] edges, double[::1] block_max, long long[::1] block_pos,
    double kappa, long long[::1] drift_count, double[::1] drift_sum, double[::1] drift_sumsq,
):
    cdef int n = p.shape[0]
    if n > MAX_CLIENTS:
        raise ValueError("compiled kernel supports at most 64 clients")
    cdef int order[MAX_CLIENTS]
    cdef double w[MAX_CLIENTS]
    cdef double tb[MAX_CLIENTS]
    cdef long long u[MAX_CLIENTS]
    cdef long long g[MAX_CLIENTS]
    cdef double d[MAX_CLIENTS]
    cdef double x[MAX_CLIENTS]
    cdef long long f, t, tc, base, kb
    cdef long long idle_sum = idle_total[0]
    cdef long long bpos = block_pos[0]
    cdef long long rpos = rec_pos[0]
    cdef Py_ssize_t n_edges = edges.shape[0]
    cdef int j, k, pos, c, idle, slot, cur, side
    cdef double tf, tcf, hi, lo, ph, r, m, total, xhi, xlo, gap, z_before = 0.0, dz
    cdef double wc, tc_key
    cdef bint drift_on = n == 2 and kappa > 0.0

    with nogil:
        for f in range(n_frames):
            t = t0 + f
            tf = <double>t
            base = f * tau

            if policy_code == 0 or policy_code == 3:
                kb = f * n
                for j in range(n):
                    if policy_code == 0:
                        w[j] = (tf * q[j] - <double>s[j]) / alpha[j]
                        tb[j] = keys[kb + j] if tie_random else <double>j
                    else:
                        w[j] = 0.0
                        tb[j] = keys[kb + j]
                # stable insertion sort: larger w first, then smaller tie key; uniform_random has w == 0
                for j in range(n):
                    order[j] = j
                for j in range(1, n):
                    cur = order[j]
                    wc = w[cur]
                    tc_key = tb[cur]
                    k = j - 1
                    while k >= 0 and _before(wc, tc_key, w[order[k]], tb[order[k]]):
                        order[k + 1] = order[k]
                        k -= 1
                    order[k + 1] = cur
            elif policy_code == 1:
                for j in range(n):
                    order[j] = <int>fixed[j]
            else:
                for j in range(n):
                    order[j] = <int>((t + j) % n)

            if drift_on:
                z_before = (tf * q[1] - <double>s[1]) / p[1] - (tf * q[0] - <double>s[0]) / p[0]

            for j in range(n):
                u[j] = 0
                g[j] = 0
            pos = 0
            idle = 0
            for slot in range(tau):
                if pos == n:
                    idle += 1
                    continue
                c = order[pos]
                u[c] += 1
                if uniforms[base + slot] < p[c]:
                    g[c] = 1
                    pos += 1

            for j in range(n):
                s[j] += g[j]
                att[j] += u[j]
            idle_sum += idle

            tc = t + 1
            tcf = <double>tc
            for j in range(n):
                d[j] = tcf * q[j] - <double>s[j]
            hi = d[0]
            lo = d[0]
            for j in range(1, n):
                if d[j] > hi:
                    hi = d[j]
                if d[j] < lo:
                    lo = d[j]
            if hi - lo > ext[2]:
                ext[2] = hi - lo
            for j in range(n):
                x[j] = d[j] / p[j]

            if drift_on and (z_before > kappa or -z_before > kappa):
                side = 0 if z_before > 0.0 else 1
                dz = fabs(x[1] - x[0]) - fabs(z_before)
                drift_count[side] += 1
                drift_sum[side] += dz
                drift_sumsq[side] += dz * dz

            if tc >= t_min:
                ph = _phi(tc)
                total = 0.0
                for j in range(n):
                    r = d[j] / ph
                    if r > dmax[j]:
                        dmax[j] = r
                    if r < dmin[j]:
                        dmin[j] = r
                    m = (<double>att[j] - <double>s[j] / p[j]) / ph
                    if m > mmax[j]:
                        mmax[j] = m
                    total += x[j]
                total = total / ph
                if total > ext[0]:
                    ext[0] = total
                if total < ext[1]:
                    ext[1] = total

                if n_edges > 1 and tc > edges[0]:
                    while bpos < n_edges and tc > edges[bpos]:
                        bpos += 1
                    if bpos < n_edges:
                        xhi = x[0]
                        xlo = x[0]
                        for j in range(1, n):
                            if x[j] > xhi:
                                xhi = x[j]
                            if x[j] < xlo:
                                xlo = x[j]
                        gap = (xhi - xlo) / ph
                        if gap > block_max[bpos]:
                            block_max[bpos] = gap

            if (tc - t_first) % stride == 0 or tc == t_last:
                rec_t[rpos] = tc
                for j in range(n):
                    rec_s[rpos, j] = s[j]
                    rec_att[rpos, j] = att[j]
                    rec_u[rpos, j] = u[j]
                    rec_g[rpos, j] = g[j]
                rec_idle[rpos] = idle
                rec_idle_total[rpos] = idle_sum
                rpos += 1

    idle_total[0] = idle_sum
    block_pos[0] = bpos
    rec_pos[0] = rpos
