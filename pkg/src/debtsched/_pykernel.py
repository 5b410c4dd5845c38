"""Pure-Python hot kernels.

Reference implementation of the compiled core in ``_ckernel.pyx``. Both
modules perform the same floating-point operations in the same order so a
run is bit-identical whichever backend is loaded.
"""

from __future__ import annotations

import math

import numpy as np

WEIGHTED, FIXED, ROUND_ROBIN, UNIFORM_RANDOM = 0, 1, 2, 3

_LOGLOG_FLOOR = math.log(math.log(16.0))


def phi(t: int) -> float:
    if t >= 16:
        return math.sqrt(2.0 * t * math.log(math.log(t)))
    return math.sqrt(2.0 * t * _LOGLOG_FLOOR)


def convolve_geometric(mass, overflow: float, p: float):
    """Add one Geometric(p) attempt count to a truncated pmf.

    ``mass[k]`` is P(X = k) for k = 0..tau; mass beyond tau is lumped into
    ``overflow``. Sums run in ascending index order.
    """
    tau = len(mass) - 1
    fail = 1.0 - p
    geo = [0.0] * (tau + 1)
    tail = [1.0] * (tau + 1)  # tail[m] = P(gamma > m) = (1-p)^m
    for j in range(1, tau + 1):
        geo[j] = p * tail[j - 1]
        tail[j] = tail[j - 1] * fail
    new = np.zeros(tau + 1)
    for k in range(1, tau + 1):
        acc = 0.0
        for j in range(1, k + 1):
            acc += mass[k - j] * geo[j]
        new[k] = acc
    spill = 0.0
    for k in range(tau + 1):
        spill += mass[k] * tail[tau - k]
    return new, overflow + spill


def run_frames(
    t0, n_frames, tau, p, q, alpha,
    policy_code, fixed, tie_random, uniforms, keys,
    s, att, idle_total,
    t_first, t_last, stride,
    rec_t, rec_s, rec_att, rec_u, rec_g, rec_idle, rec_idle_total, rec_pos,
    t_min, dmax, dmin, mmax, ext,
    edges, block_max, block_pos,
    kappa, drift_count, drift_sum, drift_sumsq,
):
    """Simulate frames ``t0 .. t0 + n_frames - 1`` in place.

    ``s``/``att``/``idle_total`` carry delivery, attempt and idle totals
    across calls; extrema, SSC block maxima and drift tallies are updated
    every frame; rows are written to the ``rec_*`` buffers on the stride.
    """
    n = len(p)
    p = [float(x) for x in p]
    q = [float(x) for x in q]
    alpha = [float(x) for x in alpha]
    sl = [int(x) for x in s]
    al = [int(x) for x in att]
    idle_sum = int(idle_total[0])
    n_edges = len(edges)
    edge_list = [int(e) for e in edges]
    bpos = int(block_pos[0])
    rpos = int(rec_pos[0])
    lo_id = list(range(n))
    drift_on = n == 2 and kappa > 0.0
    u = [0] * n
    g = [0] * n

    for f in range(n_frames):
        t = t0 + f
        tf = float(t)
        base = f * tau

        if policy_code == WEIGHTED:
            w = [(tf * q[j] - sl[j]) / alpha[j] for j in range(n)]
            if tie_random:
                kb = f * n
                order = sorted(lo_id, key=lambda j: (-w[j], keys[kb + j]))
            else:
                order = sorted(lo_id, key=lambda j: (-w[j], j))
        elif policy_code == FIXED:
            order = fixed
        elif policy_code == ROUND_ROBIN:
            order = [(t + k) % n for k in range(n)]
        else:
            kb = f * n
            order = sorted(lo_id, key=lambda j: (keys[kb + j], j))

        if drift_on:
            z_before = (tf * q[1] - sl[1]) / p[1] - (tf * q[0] - sl[0]) / p[0]

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
            sl[j] += g[j]
            al[j] += u[j]
        idle_sum += idle

        tc = t + 1
        tcf = float(tc)
        d = [tcf * q[j] - sl[j] for j in range(n)]
        hi = d[0]
        lo = d[0]
        for j in range(1, n):
            if d[j] > hi:
                hi = d[j]
            if d[j] < lo:
                lo = d[j]
        if hi - lo > ext[2]:
            ext[2] = hi - lo
        x = [d[j] / p[j] for j in range(n)]

        if drift_on and (z_before > kappa or -z_before > kappa):
            side = 0 if z_before > 0.0 else 1
            dz = abs(x[1] - x[0]) - abs(z_before)
            drift_count[side] += 1
            drift_sum[side] += dz
            drift_sumsq[side] += dz * dz

        if tc >= t_min:
            ph = phi(tc)
            total = 0.0
            for j in range(n):
                r = d[j] / ph
                if r > dmax[j]:
                    dmax[j] = r
                if r < dmin[j]:
                    dmin[j] = r
                m = (al[j] - sl[j] / p[j]) / ph
                if m > mmax[j]:
                    mmax[j] = m
                total += x[j]
            total = total / ph
            if total > ext[0]:
                ext[0] = total
            if total < ext[1]:
                ext[1] = total

            if n_edges > 1 and tc > edge_list[0]:
                while bpos < n_edges and tc > edge_list[bpos]:
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
                rec_s[rpos, j] = sl[j]
                rec_att[rpos, j] = al[j]
                rec_u[rpos, j] = u[j]
                rec_g[rpos, j] = g[j]
            rec_idle[rpos] = idle
            rec_idle_total[rpos] = idle_sum
            rpos += 1

    for j in range(n):
        s[j] = sl[j]
        att[j] = al[j]
    idle_total[0] = idle_sum
    block_pos[0] = bpos
    rec_pos[0] = rpos
