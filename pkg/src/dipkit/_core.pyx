# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot loops: periodic image sums and Metropolis sweeps.

Operation-for-operation mirror of `dipkit._fallback`; the sweep kernel
consumes the same pre-drawn random arrays in the same order so trajectories
match the pure path bit for bit.
"""

from libc.math cimport sqrt, exp

import numpy as np

cdef double FOUR_PI = 4.0 * 3.14159265358979323846


cdef inline void _hess3(double zx, double zy, double zz, double eps,
                        double* out) noexcept nogil:
    cdef double r2 = zx * zx + zy * zy + zz * zz
    cdef double r = sqrt(r2)
    cdef double pref = exp(-eps * r) / (FOUR_PI * r * r2)
    cdef double er = eps * r
    cdef double neg_a = pref * (1.0 + er)
    cdef double nb = -pref * (3.0 + er * (3.0 + er)) / r2
    out[0] = nb * zx * zx + neg_a
    out[1] = nb * zx * zy
    out[2] = nb * zx * zz
    out[3] = out[1]
    out[4] = nb * zy * zy + neg_a
    out[5] = nb * zy * zz
    out[6] = out[2]
    out[7] = out[5]
    out[8] = nb * zz * zz + neg_a


def image_sum_3d(sites, int two_l, double eps, int cutoff):
    """Kahan-compensated sum of -d_i d_j Y over images x + 2L n."""
    cdef long[:, ::1] xs = np.ascontiguousarray(sites, dtype=np.int64)
    cdef Py_ssize_t m = xs.shape[0]
    out_arr = np.empty((m, 3, 3))
    cdef double[:, :, ::1] out = out_arr
    cdef double[9] acc
    cdef double[9] comp
    cdef double[9] h
    cdef double y, tmp
    cdef double zx, zy, zz
    cdef Py_ssize_t k, e
    cdef int n0, n1, n2
    with nogil:
        for k in range(m):
            for e in range(9):
                acc[e] = 0.0
                comp[e] = 0.0
            for n0 in range(-cutoff, cutoff + 1):
                zx = xs[k, 0] + two_l * n0
                for n1 in range(-cutoff, cutoff + 1):
                    zy = xs[k, 1] + two_l * n1
                    for n2 in range(-cutoff, cutoff + 1):
                        zz = xs[k, 2] + two_l * n2
                        if zx == 0.0 and zy == 0.0 and zz == 0.0:
                            continue
                        _hess3(zx, zy, zz, eps, h)
                        for e in range(9):
                            y = h[e] - comp[e]
                            tmp = acc[e] + y
                            comp[e] = (tmp - acc[e]) - y
                            acc[e] = tmp
            for e in range(9):
                out[k, e // 3, e % 3] = acc[e]
    return out_arr


def compute_field(double[:, ::1] spins, double[:, :, ::1] wtable,
                  int[:, :, ::1] offtab, int[:, ::1] coords):
    """Local field h_y = sum_x W(y - x) S_x, including x = y."""
    cdef Py_ssize_t n = spins.shape[0]
    cdef int d = <int> spins.shape[1]
    field_arr = np.zeros((n, d))
    cdef double[:, ::1] field = field_arr
    cdef Py_ssize_t x, yy
    cdef int a, i, j, idx
    cdef int[8] cx
    cdef double s
    with nogil:
        for x in range(n):
            for a in range(d):
                cx[a] = coords[x, a]
            for yy in range(n):
                idx = 0
                for a in range(d):
                    idx += offtab[a, cx[a], coords[yy, a]]
                for i in range(d):
                    s = 0.0
                    for j in range(d):
                        s += wtable[idx, i, j] * spins[x, j]
                    field[yy, i] += s
    return field_arr


def energy_from_field(double[:, ::1] spins, double[:, ::1] field):
    cdef Py_ssize_t n = spins.shape[0]
    cdef int d = <int> spins.shape[1]
    cdef double h = 0.0
    cdef Py_ssize_t x
    cdef int i
    with nogil:
        for x in range(n):
            for i in range(d):
                h += spins[x, i] * field[x, i]
    return h


def metropolis_sweeps(double[:, ::1] spins, double[:, ::1] field,
                      double[:, :, ::1] wtable, int[:, :, ::1] offtab,
                      int[:, ::1] coords, int[::1] sites,
                      double beta, double cos_cone,
                      double[:, ::1] u_t, double[:, :, ::1] z_dir,
                      double[:, ::1] u_acc):
    """Sequential-scan Metropolis sweeps with cone proposals, in place.

    Returns (accepted moves, summed energy change). See the fallback module
    for the contract; arithmetic here follows it operation for operation.
    """
    cdef Py_ssize_t nsweeps = u_t.shape[0]
    cdef Py_ssize_t nmoves = u_t.shape[1]
    cdef Py_ssize_t n = spins.shape[0]
    cdef int d = <int> spins.shape[1]
    cdef double one_minus = 1.0 - cos_cone
    cdef long n_acc = 0
    cdef double dh_sum = 0.0
    cdef double[8] zp, sp, ds
    cdef int[8] cx
    cdef double t, sdz, nz2, coef, nrm2, nrm, dot_f, quad, dh, s
    cdef Py_ssize_t sw, k, yy
    cdef int x, a, i, j, idx
    with nogil:
        for sw in range(nsweeps):
            for k in range(nmoves):
                x = sites[k]
                t = 1.0 - u_t[sw, k] * one_minus
                sdz = 0.0
                for i in range(d):
                    sdz += z_dir[sw, k, i] * spins[x, i]
                nz2 = 0.0
                for i in range(d):
                    zp[i] = z_dir[sw, k, i] - sdz * spins[x, i]
                    nz2 += zp[i] * zp[i]
                if nz2 < 1e-24:
                    continue
                coef = sqrt(1.0 - t * t) / sqrt(nz2)
                nrm2 = 0.0
                for i in range(d):
                    sp[i] = t * spins[x, i] + coef * zp[i]
                    nrm2 += sp[i] * sp[i]
                nrm = sqrt(nrm2)
                dot_f = 0.0
                for i in range(d):
                    sp[i] = sp[i] / nrm
                    ds[i] = sp[i] - spins[x, i]
                for i in range(d):
                    dot_f += ds[i] * field[x, i]
                quad = 0.0
                for i in range(d):
                    for j in range(d):
                        quad += ds[i] * wtable[0, i, j] * ds[j]
                dh = 2.0 * dot_f + quad
                if dh > 0.0 and u_acc[sw, k] >= exp(-beta * dh):
                    continue
                for a in range(d):
                    cx[a] = coords[x, a]
                for yy in range(n):
                    idx = 0
                    for a in range(d):
                        idx += offtab[a, cx[a], coords[yy, a]]
                    for i in range(d):
                        s = 0.0
                        for j in range(d):
                            s += wtable[idx, i, j] * ds[j]
                        field[yy, i] += s
                for i in range(d):
                    spins[x, i] = sp[i]
                n_acc += 1
                dh_sum += dh
    return n_acc, dh_sum
