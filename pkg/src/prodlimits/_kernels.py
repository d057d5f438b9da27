"""Compiled inner loops for batch simulation.

Each kernel processes a contiguous block of replicates ``start .. start+count``
and writes into caller-owned output arrays. Replicate ``i`` draws its
``k``-th uniform from counter ``k`` of stream ``(seed, i)``, so the block
decomposition never changes the numbers.
"""

import math

import numpy as np
from numba import njit

from .streams import nb_stream_key, nb_uniform_at

FLAG_DEGENERATE = 1
FLAG_ENTRY_UNDERFLOW = 2
FLAG_RHO_BRACKET = 4


@njit(cache=True, nogil=True)
def op_norm(m):
    d = m.shape[0]
    if d == 2:
        a, b, c, e = m[0, 0], m[0, 1], m[1, 0], m[1, 1]
        fro = a * a + b * b + c * c + e * e
        det = a * e - b * c
        disc = fro * fro - 4.0 * det * det
        if disc < 0.0:
            disc = 0.0
        return math.sqrt(0.5 * (fro + math.sqrt(disc)))
    s = np.linalg.svd(m)[1]
    return s[0]


@njit(cache=True, nogil=True)
def spectral_radius(m, tol, max_iter):
    """(rho, bracket width) of a non-negative matrix."""
    d = m.shape[0]
    if d == 2:
        a, b, c, e = m[0, 0], m[0, 1], m[1, 0], m[1, 1]
        half = 0.5 * (a - e)
        return 0.5 * (a + e) + math.sqrt(half * half + b * c), 0.0
    x = np.full(d, 1.0 / math.sqrt(d))
    lo = 0.0
    hi = op_norm(m)
    for _ in range(max_iter):
        y = m @ x
        cur_lo = np.inf
        cur_hi = 0.0
        interior = True
        for i in range(d):
            if x[i] > 0.0:
                r = y[i] / x[i]
                if r < cur_lo:
                    cur_lo = r
                if r > cur_hi:
                    cur_hi = r
            else:
                interior = False
        if cur_lo > lo:
            lo = cur_lo
        if interior and cur_hi < hi:
            hi = cur_hi
        if hi - lo <= tol * hi:
            return 0.5 * (lo + hi), 0.0
        nrm = math.sqrt(np.sum(y * y))
        if nrm == 0.0:
            return 0.0, 0.0
        x = y / nrm
    return 0.5 * (lo + hi), hi - lo


@njit(cache=True, nogil=True)
def _pick(cum, u):
    k = cum.shape[0]
    for j in range(k - 1):
        if u < cum[j]:
            return j
    return k - 1


@njit(cache=True, nogil=True)
def _observables(m, lognorm, x0, f, out_vec, out_op, out_entry, out_rho, out_width, out_flags, i):
    d = m.shape[0]
    mx = m @ x0
    nx = math.sqrt(np.sum(mx * mx))
    flags = 0
    if nx == 0.0:
        flags |= FLAG_DEGENERATE
        out_vec[i] = -np.inf
    else:
        out_vec[i] = math.log(nx) + lognorm
    out_op[i] = math.log(op_norm(m)) + lognorm
    fx = 0.0
    for j in range(d):
        fx += f[j] * mx[j]
    if fx > 0.0:
        out_entry[i] = math.log(fx) + lognorm
    else:
        out_entry[i] = -np.inf
        flags |= FLAG_ENTRY_UNDERFLOW
    rho, width = spectral_radius(m, 1e-10, 10_000)
    if width > 0.0:
        flags |= FLAG_RHO_BRACKET
    out_rho[i] = math.log(rho) + lognorm if rho > 0.0 else -np.inf
    out_width[i] = width
    out_flags[i] = flags


@njit(cache=True, nogil=True)
def _left_mul(a, m, tmp):
    # m <- a @ m without allocation
    d = m.shape[0]
    for i in range(d):
        for j in range(d):
            acc = 0.0
            for k in range(d):
                acc += a[i, k] * m[k, j]
            tmp[i, j] = acc
    for i in range(d):
        for j in range(d):
            m[i, j] = tmp[i, j]


@njit(cache=True, nogil=True)
def _act(a, x, y):
    # x <- a x / |a x|; returns |a x| (x untouched when it is 0)
    d = x.shape[0]
    ss = 0.0
    for i in range(d):
        acc = 0.0
        for k in range(d):
            acc += a[i, k] * x[k]
        y[i] = acc
        ss += acc * acc
    ny = math.sqrt(ss)
    if ny > 0.0:
        for i in range(d):
            x[i] = y[i] / ny
    return ny


@njit(cache=True, nogil=True)
def _step(a, m, tmp, lognorm):
    _left_mul(a, m, tmp)
    nrm = op_norm(m)
    d = m.shape[0]
    for i in range(d):
        for j in range(d):
            m[i, j] /= nrm
    return lognorm + math.log(nrm)


@njit(cache=True, nogil=True)
def simulate_block(atoms, cum, x0, f, n, seed, start, count, keep_gains,
                   out_vec, out_op, out_entry, out_rho, out_width, out_x, out_flags, out_gains):
    d = atoms.shape[1]
    useed = np.uint64(seed)
    m = np.empty((d, d))
    tmp = np.empty((d, d))
    x = np.empty(d)
    y = np.empty(d)
    for r in range(count):
        i = start + r
        skey = nb_stream_key(useed, np.uint64(i))
        for p in range(d):
            for q in range(d):
                m[p, q] = 1.0 if p == q else 0.0
            x[p] = x0[p]
        lognorm = 0.0
        dead = False
        for k in range(n):
            u = nb_uniform_at(skey, np.uint64(k))
            a = atoms[_pick(cum, u)]
            lognorm = _step(a, m, tmp, lognorm)
            ny = _act(a, x, y)
            if ny == 0.0:
                dead = True
            if keep_gains:
                out_gains[r, k] = math.log(ny) if ny > 0.0 else -np.inf
        _observables(m, lognorm, x0, f, out_vec, out_op, out_entry, out_rho, out_width, out_flags, r)
        if dead:
            out_flags[r] |= FLAG_DEGENERATE
        for j in range(d):
            out_x[r, j] = x[j]


@njit(cache=True, nogil=True)
def _opn2(a, b, c, e):
    fro = a * a + b * b + c * c + e * e
    det = a * e - b * c
    disc = fro * fro - 4.0 * det * det
    if disc < 0.0:
        disc = 0.0
    return math.sqrt(0.5 * (fro + math.sqrt(disc)))


@njit(cache=True, nogil=True)
def _finish_2d(m00, m01, m10, m11, lognorm, x0, f,
               out_vec, out_op, out_entry, out_rho, out_width, out_flags, r):
    v0 = m00 * x0[0] + m01 * x0[1]
    v1 = m10 * x0[0] + m11 * x0[1]
    nx = math.sqrt(v0 * v0 + v1 * v1)
    flags = 0
    if nx == 0.0:
        flags |= FLAG_DEGENERATE
        out_vec[r] = -np.inf
    else:
        out_vec[r] = math.log(nx) + lognorm
    out_op[r] = math.log(_opn2(m00, m01, m10, m11)) + lognorm
    fx = f[0] * v0 + f[1] * v1
    if fx > 0.0:
        out_entry[r] = math.log(fx) + lognorm
    else:
        out_entry[r] = -np.inf
        flags |= FLAG_ENTRY_UNDERFLOW
    half = 0.5 * (m00 - m11)
    rho = 0.5 * (m00 + m11) + math.sqrt(half * half + m01 * m10)
    out_rho[r] = math.log(rho) + lognorm if rho > 0.0 else -np.inf
    out_width[r] = 0.0
    out_flags[r] = flags


@njit(cache=True, nogil=True)
def simulate_block_2d(atoms, cum, x0, f, n, seed, start, count, keep_gains,
                      out_vec, out_op, out_entry, out_rho, out_width, out_x, out_flags, out_gains):
    """Scalar-state specialization of :func:`simulate_block` for d = 2."""
    useed = np.uint64(seed)
    k_atoms = atoms.shape[0]
    for r in range(count):
        skey = nb_stream_key(useed, np.uint64(start + r))
        m00, m01, m10, m11 = 1.0, 0.0, 0.0, 1.0
        xa, xb = x0[0], x0[1]
        lognorm = 0.0
        dead = False
        for k in range(n):
            u = nb_uniform_at(skey, np.uint64(k))
            j = k_atoms - 1
            for t in range(k_atoms - 1):
                if u < cum[t]:
                    j = t
                    break
            a00, a01, a10, a11 = atoms[j, 0, 0], atoms[j, 0, 1], atoms[j, 1, 0], atoms[j, 1, 1]
            p00 = a00 * m00 + a01 * m10
            p01 = a00 * m01 + a01 * m11
            p10 = a10 * m00 + a11 * m10
            p11 = a10 * m01 + a11 * m11
            nrm = _opn2(p00, p01, p10, p11)
            m00, m01, m10, m11 = p00 / nrm, p01 / nrm, p10 / nrm, p11 / nrm
            lognorm += math.log(nrm)
            ya = a00 * xa + a01 * xb
            yb = a10 * xa + a11 * xb
            ny = math.sqrt(ya * ya + yb * yb)
            if ny > 0.0:
                xa, xb = ya / ny, yb / ny
            else:
                dead = True
            if keep_gains:
                out_gains[r, k] = math.log(ny) if ny > 0.0 else -np.inf
        _finish_2d(m00, m01, m10, m11, lognorm, x0, f,
                   out_vec, out_op, out_entry, out_rho, out_width, out_flags, r)
        if dead:
            out_flags[r] |= FLAG_DEGENERATE
        out_x[r, 0] = xa
        out_x[r, 1] = xb


@njit(cache=True, nogil=True)
def interp_angle(values, h, theta):
    m = values.shape[0]
    t = theta / h
    idx = int(t)
    if idx >= m - 1:
        idx = m - 2
    if idx < 0:
        idx = 0
    frac = t - idx
    return (1.0 - frac) * values[idx] + frac * values[idx + 1]


@njit(cache=True, nogil=True)
def tilted_block_2d(atoms, weights, r_grid, h, s, x0, f, n, seed, start, count,
                    out_vec, out_op, out_entry, out_rho, out_width, out_x, out_flags, out_logw):
    """Sequential exact importance sampling under the tilted kernel (d = 2).

    At state x atom j has probability proportional to
    ``w_j |g_j x|^s r(g_j . x)``; the log-weight accumulates
    ``log(w_a / p_a)`` for the chosen atom a. At ``s = 0`` the original
    weights are used directly and the log-weight stays exactly 0.
    """
    k_atoms = atoms.shape[0]
    q = np.empty(k_atoms)
    useed = np.uint64(seed)
    untilted = s == 0.0
    for r in range(count):
        skey = nb_stream_key(useed, np.uint64(start + r))
        m00, m01, m10, m11 = 1.0, 0.0, 0.0, 1.0
        xa, xb = x0[0], x0[1]
        lognorm = 0.0
        logw = 0.0
        for k in range(n):
            if untilted:
                for j in range(k_atoms):
                    q[j] = weights[j]
                z = 1.0
            else:
                z = 0.0
                for j in range(k_atoms):
                    y0 = atoms[j, 0, 0] * xa + atoms[j, 0, 1] * xb
                    y1 = atoms[j, 1, 0] * xa + atoms[j, 1, 1] * xb
                    ny = math.sqrt(y0 * y0 + y1 * y1)
                    rv = interp_angle(r_grid, h, math.atan2(y1, y0))
                    q[j] = weights[j] * ny ** s * rv
                    z += q[j]
            u = nb_uniform_at(skey, np.uint64(k)) * z
            c = 0.0
            pick = k_atoms - 1
            for j in range(k_atoms):
                c += q[j]
                if u < c:
                    pick = j
                    break
            if not untilted:
                logw += math.log(weights[pick]) + math.log(z) - math.log(q[pick])
            a00, a01 = atoms[pick, 0, 0], atoms[pick, 0, 1]
            a10, a11 = atoms[pick, 1, 0], atoms[pick, 1, 1]
            p00 = a00 * m00 + a01 * m10
            p01 = a00 * m01 + a01 * m11
            p10 = a10 * m00 + a11 * m10
            p11 = a10 * m01 + a11 * m11
            nrm = _opn2(p00, p01, p10, p11)
            m00, m01, m10, m11 = p00 / nrm, p01 / nrm, p10 / nrm, p11 / nrm
            lognorm += math.log(nrm)
            ya = a00 * xa + a01 * xb
            yb = a10 * xa + a11 * xb
            ny = math.sqrt(ya * ya + yb * yb)
            xa, xb = ya / ny, yb / ny
        _finish_2d(m00, m01, m10, m11, lognorm, x0, f,
                   out_vec, out_op, out_entry, out_rho, out_width, out_flags, r)
        out_logw[r] = logw
        out_x[r, 0] = xa
        out_x[r, 1] = xb
