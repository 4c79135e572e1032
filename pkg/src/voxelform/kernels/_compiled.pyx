# cython: boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled kernels for 3D convolution and max pooling.

Same contracts as the numpy reference backend, written as typed loops so the
stride-1 inner loops run contiguously over the fastest axis and the compiler
can vectorize them.  Summation order is fixed (channel, then kernel offset),
so repeated runs are bitwise identical.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()

NAME = "compiled"


def conv3d_forward_padded(double[:, :, :, :, ::1] xp,
                          double[:, :, :, :, ::1] w,
                          Py_ssize_t stride):
    cdef Py_ssize_t nb = xp.shape[0], ci_n = xp.shape[1]
    cdef Py_ssize_t d = xp.shape[2], h = xp.shape[3], wd = xp.shape[4]
    cdef Py_ssize_t co_n = w.shape[0]
    cdef Py_ssize_t kd = w.shape[2], kh = w.shape[3], kw = w.shape[4]
    cdef Py_ssize_t od = (d - kd) // stride + 1
    cdef Py_ssize_t oh = (h - kh) // stride + 1
    cdef Py_ssize_t ow = (wd - kw) // stride + 1
    y_arr = np.zeros((nb, co_n, od, oh, ow), dtype=np.float64)
    cdef double[:, :, :, :, ::1] y = y_arr
    cdef Py_ssize_t b, o, c, a, e, f, i, j, k
    cdef double wv
    if stride == 1:
        for b in range(nb):
            for o in range(co_n):
                for c in range(ci_n):
                    for a in range(kd):
                        for e in range(kh):
                            for f in range(kw):
                                wv = w[o, c, a, e, f]
                                for i in range(od):
                                    for j in range(oh):
                                        for k in range(ow):
                                            y[b, o, i, j, k] += wv * xp[b, c, a + i, e + j, f + k]
    else:
        for b in range(nb):
            for o in range(co_n):
                for c in range(ci_n):
                    for a in range(kd):
                        for e in range(kh):
                            for f in range(kw):
                                wv = w[o, c, a, e, f]
                                for i in range(od):
                                    for j in range(oh):
                                        for k in range(ow):
                                            y[b, o, i, j, k] += wv * xp[b, c, a + i * stride, e + j * stride, f + k * stride]
    return y_arr


def conv3d_backward_padded(double[:, :, :, :, ::1] xp,
                           double[:, :, :, :, ::1] w,
                           double[:, :, :, :, ::1] gy,
                           Py_ssize_t stride):
    cdef Py_ssize_t nb = xp.shape[0], ci_n = xp.shape[1]
    cdef Py_ssize_t co_n = w.shape[0]
    cdef Py_ssize_t kd = w.shape[2], kh = w.shape[3], kw = w.shape[4]
    cdef Py_ssize_t od = gy.shape[2], oh = gy.shape[3], ow = gy.shape[4]
    gxp_arr = np.zeros((xp.shape[0], xp.shape[1], xp.shape[2], xp.shape[3], xp.shape[4]),
                       dtype=np.float64)
    gw_arr = np.zeros((w.shape[0], w.shape[1], w.shape[2], w.shape[3], w.shape[4]),
                      dtype=np.float64)
    cdef double[:, :, :, :, ::1] gxp = gxp_arr
    cdef double[:, :, :, :, ::1] gw = gw_arr
    cdef Py_ssize_t b, o, c, a, e, f, i, j, k
    cdef double wv, g, acc
    if stride == 1:
        for b in range(nb):
            for o in range(co_n):
                for c in range(ci_n):
                    for a in range(kd):
                        for e in range(kh):
                            for f in range(kw):
                                wv = w[o, c, a, e, f]
                                acc = 0.0
                                for i in range(od):
                                    for j in range(oh):
                                        for k in range(ow):
                                            g = gy[b, o, i, j, k]
                                            gxp[b, c, a + i, e + j, f + k] += wv * g
                                            acc += xp[b, c, a + i, e + j, f + k] * g
                                gw[o, c, a, e, f] += acc
    else:
        for b in range(nb):
            for o in range(co_n):
                for c in range(ci_n):
                    for a in range(kd):
                        for e in range(kh):
                            for f in range(kw):
                                wv = w[o, c, a, e, f]
                                acc = 0.0
                                for i in range(od):
                                    for j in range(oh):
                                        for k in range(ow):
                                            g = gy[b, o, i, j, k]
                                            gxp[b, c, a + i * stride, e + j * stride, f + k * stride] += wv * g
                                            acc += xp[b, c, a + i * stride, e + j * stride, f + k * stride] * g
                                gw[o, c, a, e, f] += acc
    return gxp_arr, gw_arr


def maxpool3d_forward(double[:, :, :, :, ::1] x, window, Py_ssize_t stride):
    cdef Py_ssize_t p = window[0], q = window[1], r = window[2]
    cdef Py_ssize_t nb = x.shape[0], ch = x.shape[1]
    cdef Py_ssize_t d = x.shape[2], h = x.shape[3], w = x.shape[4]
    cdef Py_ssize_t od = (d - p) // stride + 1
    cdef Py_ssize_t oh = (h - q) // stride + 1
    cdef Py_ssize_t ow = (w - r) // stride + 1
    y_arr = np.empty((nb, ch, od, oh, ow), dtype=np.float64)
    am_arr = np.empty((nb, ch, od, oh, ow), dtype=np.int64)
    cdef double[:, :, :, :, ::1] y = y_arr
    cdef cnp.int64_t[:, :, :, :, ::1] am = am_arr
    cdef Py_ssize_t b, c, i, j, k, dp, dq, dr, di, dj, dk
    cdef double best, v
    cdef cnp.int64_t bidx
    for b in range(nb):
        for c in range(ch):
            for i in range(od):
                for j in range(oh):
                    for k in range(ow):
                        best = -INFINITY
                        bidx = -1
                        for dp in range(p):
                            for dq in range(q):
                                for dr in range(r):
                                    di = i * stride + dp
                                    dj = j * stride + dq
                                    dk = k * stride + dr
                                    v = x[b, c, di, dj, dk]
                                    if v > best:
                                        best = v
                                        bidx = (di * h + dj) * w + dk
                        y[b, c, i, j, k] = best
                        am[b, c, i, j, k] = bidx
    return y_arr, am_arr


def maxpool3d_backward(double[:, :, :, :, ::1] gy,
                       cnp.int64_t[:, :, :, :, ::1] am,
                       spatial_shape):
    cdef Py_ssize_t d = spatial_shape[0], h = spatial_shape[1], w = spatial_shape[2]
    cdef Py_ssize_t nb = gy.shape[0], ch = gy.shape[1]
    cdef Py_ssize_t od = gy.shape[2], oh = gy.shape[3], ow = gy.shape[4]
    gx_arr = np.zeros((nb, ch, d * h * w), dtype=np.float64)
    cdef double[:, :, ::1] gx = gx_arr
    cdef Py_ssize_t b, c, i, j, k
    for b in range(nb):
        for c in range(ch):
            for i in range(od):
                for j in range(oh):
                    for k in range(ow):
                        gx[b, c, am[b, c, i, j, k]] += gy[b, c, i, j, k]
    return gx_arr.reshape(nb, ch, d, h, w)
