# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Same signatures and results as ``mcvl._fallback``."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def sift_bin(double[:, ::1] w_lo, double[:, ::1] w_hi, long[:, ::1] b_lo,
             double[:, ::1] tab, Py_ssize_t spacing):
    cdef Py_ssize_t H = w_lo.shape[0], W = w_lo.shape[1], width = tab.shape[1]
    if W < width or H < width:
        return np.zeros((0, 128))
    cdef Py_ssize_t nx = (W - width) // spacing + 1
    cdef Py_ssize_t ny = (H - width) // spacing + 1
    out_arr = np.zeros((ny * nx, 128))
    cdef double[:, ::1] out = out_arr
    # x-pass result: per image row and grid column, 4 cells x 8 orientations
    acc_arr = np.zeros((H, nx, 32))
    cdef double[:, :, ::1] acc = acc_arr
    # per offset: first cell touched with its weight, weight of the next cell
    cdef long[::1] j0 = np.full(width, -1, dtype=np.int64)
    cdef double[::1] t0 = np.zeros(width), t1 = np.zeros(width)
    cdef Py_ssize_t p, j, y, gy, gx, px, py, x, o0, o1, k, row, c0
    cdef double a, b, wa, wb, v
    for p in range(width):
        for j in range(4):
            if tab[j, p] != 0.0:
                if j0[p] < 0:
                    j0[p] = j
                    t0[p] = tab[j, p]
                else:
                    t1[p] = tab[j, p]
    for y in range(H):
        for gx in range(nx):
            for px in range(width):
                if j0[px] < 0:
                    continue
                x = gx * spacing + px
                a = w_lo[y, x]
                b = w_hi[y, x]
                if a == 0.0 and b == 0.0:
                    continue
                o0 = b_lo[y, x]
                o1 = (o0 + 1) % 8
                c0 = j0[px] * 8
                acc[y, gx, c0 + o0] += t0[px] * a
                acc[y, gx, c0 + o1] += t0[px] * b
                if t1[px] != 0.0:
                    acc[y, gx, c0 + 8 + o0] += t1[px] * a
                    acc[y, gx, c0 + 8 + o1] += t1[px] * b
    for gy in range(ny):
        for gx in range(nx):
            row = gy * nx + gx
            for py in range(width):
                if j0[py] < 0:
                    continue
                y = gy * spacing + py
                c0 = j0[py] * 32
                wa = t0[py]
                wb = t1[py]
                if wb != 0.0:
                    for k in range(32):
                        v = acc[y, gx, k]
                        out[row, c0 + k] += wa * v
                        out[row, c0 + 32 + k] += wb * v
                else:
                    for k in range(32):
                        out[row, c0 + k] += wa * acc[y, gx, k]
    return out_arr


def vlad_aggregate(double[:, ::1] X, double[:, ::1] centers, double[:, ::1] dots):
    cdef Py_ssize_t M = X.shape[0], K = centers.shape[0], d = centers.shape[1]
    cdef Py_ssize_t i, k, t, best
    cdef double s, bs
    out_arr = np.zeros((K, d))
    assign_arr = np.zeros(M, dtype=np.intp)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t[::1] assign = assign_arr
    cdef double[::1] cn = np.zeros(K)
    cdef long[::1] counts = np.zeros(K, dtype=np.int64)
    for k in range(K):
        s = 0.0
        for t in range(d):
            s += centers[k, t] * centers[k, t]
        cn[k] = s
    for i in range(M):
        best = 0
        bs = cn[0] - 2.0 * dots[i, 0]
        for k in range(1, K):
            s = cn[k] - 2.0 * dots[i, k]
            if s < bs:
                bs = s
                best = k
        assign[i] = best
        counts[best] += 1
        for t in range(d):
            out[best, t] += X[i, t]
    for k in range(K):
        if counts[k]:
            for t in range(d):
                out[k, t] -= counts[k] * centers[k, t]
    return out_arr.ravel(), assign_arr


def sus_indices(double[::1] weights, double u0):
    cdef Py_ssize_t n = weights.shape[0], k, i = 0
    idx_arr = np.zeros(n, dtype=np.intp)
    cdef Py_ssize_t[::1] idx = idx_arr
    cdef double c = weights[0], ptr
    for k in range(n):
        ptr = u0 + (<double>k) / n
        while ptr >= c and i < n - 1:
            i += 1
            c += weights[i]
        idx[k] = i
    return idx_arr
