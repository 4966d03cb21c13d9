# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel core: patch packing/unpacking, direct 1-out-channel conv,
and max pooling.

Loops are arranged so the innermost dimension is contiguous in both source
and destination whenever stride == 1, with padding handled by precomputed
valid ranges instead of per-pixel bounds checks. Kernels run sequentially:
the surrounding training step keeps BLAS busy on all cores, and memory-bound
loops gain nothing from oversubscription.
"""

import numpy as np

cimport cython
cimport numpy as cnp

cdef extern from "math.h":
    float INFINITY

cnp.import_array()

NAME = "native"

ctypedef fused real:
    float
    double


cdef inline Py_ssize_t _lo(Py_ssize_t off, int stride) noexcept nogil:
    # smallest o >= 0 with o*stride + off >= 0
    if off >= 0:
        return 0
    return (-off + stride - 1) // stride


cdef inline Py_ssize_t _hi(Py_ssize_t off, Py_ssize_t limit, Py_ssize_t omax, int stride) noexcept nogil:
    # smallest o with o*stride + off >= limit, clipped to omax
    cdef Py_ssize_t hi = (limit - off + stride - 1) // stride
    if hi > omax:
        return omax
    if hi < 0:
        return 0
    return hi


def conv_out_size(size, k, stride, pad):
    return (size + 2 * pad - k) // stride + 1


def im2col(x, int kh, int kw, int stride, int pad):
    return _im2col(np.ascontiguousarray(x), kh, kw, stride, pad)


def col2im(cols, shape, int kh, int kw, int stride, int pad):
    n, c, h, w = shape
    return _col2im(np.ascontiguousarray(cols), n, c, h, w, kh, kw, stride, pad)


def conv1out_forward(x, w, int stride, int pad):
    return _conv1out_forward(
        np.ascontiguousarray(x), np.ascontiguousarray(w.reshape(w.shape[1:])), stride, pad
    )


def conv1out_backward_input(g, w, shape, int stride, int pad):
    n, c, h, w_ = shape
    return _conv1out_backward_input(
        np.ascontiguousarray(g), np.ascontiguousarray(w.reshape(w.shape[1:])),
        n, c, h, w_, stride, pad,
    )


def conv1out_backward_weight(g, x, int kh, int kw, int stride, int pad):
    gw = _conv1out_backward_weight(
        np.ascontiguousarray(g), np.ascontiguousarray(x), kh, kw, stride, pad
    )
    return gw.reshape(1, x.shape[1], kh, kw)


def maxpool_forward(x, int k, int stride, int pad):
    return _maxpool_forward(np.ascontiguousarray(x), k, stride, pad)


def maxpool_backward(gout, idx, shape, int k, int stride, int pad):
    n, c, h, w = shape
    return _maxpool_backward(
        np.ascontiguousarray(gout), np.ascontiguousarray(idx), n, c, h, w, pad
    )


def _im2col(real[:, :, :, ::1] x, int kh, int kw, int stride, int pad):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t oh = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t ow = (w + 2 * pad - kw) // stride + 1
    dtype = np.float32 if real is float else np.float64
    out_arr = np.zeros((n, c * kh * kw, oh * ow), dtype=dtype)
    cdef real[:, :, ::1] out = out_arr
    cdef Py_ssize_t ni, ci, i, j, oy, ox, iy, ox_lo, ox_hi, oy_lo, oy_hi, row, base
    with nogil:
        for ni in range(n):
            for ci in range(c):
                for i in range(kh):
                    oy_lo = _lo(i - pad, stride)
                    oy_hi = _hi(i - pad, h, oh, stride)
                    for j in range(kw):
                        row = (ci * kh + i) * kw + j
                        ox_lo = _lo(j - pad, stride)
                        ox_hi = _hi(j - pad, w, ow, stride)
                        for oy in range(oy_lo, oy_hi):
                            iy = oy * stride + i - pad
                            base = oy * ow
                            if stride == 1:
                                for ox in range(ox_lo, ox_hi):
                                    out[ni, row, base + ox] = x[ni, ci, iy, ox + j - pad]
                            else:
                                for ox in range(ox_lo, ox_hi):
                                    out[ni, row, base + ox] = x[ni, ci, iy, ox * stride + j - pad]
    return out_arr


def _col2im(real[:, :, ::1] cols, Py_ssize_t n, Py_ssize_t c, Py_ssize_t h, Py_ssize_t w,
            int kh, int kw, int stride, int pad):
    cdef Py_ssize_t oh = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t ow = (w + 2 * pad - kw) // stride + 1
    dtype = np.float32 if real is float else np.float64
    out_arr = np.zeros((n, c, h, w), dtype=dtype)
    cdef real[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t ni, ci, i, j, oy, ox, iy, ox_lo, ox_hi, oy_lo, oy_hi, row, base
    with nogil:
        for ni in range(n):
            for ci in range(c):
                for i in range(kh):
                    oy_lo = _lo(i - pad, stride)
                    oy_hi = _hi(i - pad, h, oh, stride)
                    for j in range(kw):
                        row = (ci * kh + i) * kw + j
                        ox_lo = _lo(j - pad, stride)
                        ox_hi = _hi(j - pad, w, ow, stride)
                        for oy in range(oy_lo, oy_hi):
                            iy = oy * stride + i - pad
                            base = oy * ow
                            if stride == 1:
                                for ox in range(ox_lo, ox_hi):
                                    out[ni, ci, iy, ox + j - pad] += cols[ni, row, base + ox]
                            else:
                                for ox in range(ox_lo, ox_hi):
                                    out[ni, ci, iy, ox * stride + j - pad] += cols[ni, row, base + ox]
    return out_arr


def _conv1out_forward(real[:, :, :, ::1] x, real[:, :, ::1] w, int stride, int pad):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], ww = x.shape[3]
    cdef Py_ssize_t kh = w.shape[1], kw = w.shape[2]
    cdef Py_ssize_t oh = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t ow = (ww + 2 * pad - kw) // stride + 1
    dtype = np.float32 if real is float else np.float64
    out_arr = np.zeros((n, 1, oh, ow), dtype=dtype)
    cdef real[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t ni, ci, i, j, oy, ox, iy, ox_lo, ox_hi, oy_lo, oy_hi
    cdef real wv
    with nogil:
        for ni in range(n):
            for ci in range(c):
                for i in range(kh):
                    oy_lo = _lo(i - pad, stride)
                    oy_hi = _hi(i - pad, h, oh, stride)
                    for j in range(kw):
                        wv = w[ci, i, j]
                        ox_lo = _lo(j - pad, stride)
                        ox_hi = _hi(j - pad, ww, ow, stride)
                        for oy in range(oy_lo, oy_hi):
                            iy = oy * stride + i - pad
                            if stride == 1:
                                for ox in range(ox_lo, ox_hi):
                                    out[ni, 0, oy, ox] += wv * x[ni, ci, iy, ox + j - pad]
                            else:
                                for ox in range(ox_lo, ox_hi):
                                    out[ni, 0, oy, ox] += wv * x[ni, ci, iy, ox * stride + j - pad]
    return out_arr


def _conv1out_backward_input(real[:, :, :, ::1] g, real[:, :, ::1] w,
                             Py_ssize_t n, Py_ssize_t c, Py_ssize_t h, Py_ssize_t ww,
                             int stride, int pad):
    cdef Py_ssize_t kh = w.shape[1], kw = w.shape[2]
    cdef Py_ssize_t oh = g.shape[2], ow = g.shape[3]
    dtype = np.float32 if real is float else np.float64
    out_arr = np.zeros((n, c, h, ww), dtype=dtype)
    cdef real[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t ni, ci, i, j, oy, ox, iy, ox_lo, ox_hi, oy_lo, oy_hi
    cdef real wv
    with nogil:
        for ni in range(n):
            for ci in range(c):
                for i in range(kh):
                    oy_lo = _lo(i - pad, stride)
                    oy_hi = _hi(i - pad, h, oh, stride)
                    for j in range(kw):
                        wv = w[ci, i, j]
                        ox_lo = _lo(j - pad, stride)
                        ox_hi = _hi(j - pad, ww, ow, stride)
                        for oy in range(oy_lo, oy_hi):
                            iy = oy * stride + i - pad
                            if stride == 1:
                                for ox in range(ox_lo, ox_hi):
                                    out[ni, ci, iy, ox + j - pad] += wv * g[ni, 0, oy, ox]
                            else:
                                for ox in range(ox_lo, ox_hi):
                                    out[ni, ci, iy, ox * stride + j - pad] += wv * g[ni, 0, oy, ox]
    return out_arr


def _conv1out_backward_weight(real[:, :, :, ::1] g, real[:, :, :, ::1] x,
                              int kh, int kw, int stride, int pad):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], ww = x.shape[3]
    cdef Py_ssize_t oh = g.shape[2], ow = g.shape[3]
    dtype = np.float32 if real is float else np.float64
    out_arr = np.zeros((c, kh, kw), dtype=dtype)
    cdef real[:, :, ::1] out = out_arr
    cdef Py_ssize_t ni, ci, i, j, oy, ox, iy, ox_lo, ox_hi, oy_lo, oy_hi
    cdef real acc
    with nogil:
        for ni in range(n):
            for ci in range(c):
                for i in range(kh):
                    oy_lo = _lo(i - pad, stride)
                    oy_hi = _hi(i - pad, h, oh, stride)
                    for j in range(kw):
                        ox_lo = _lo(j - pad, stride)
                        ox_hi = _hi(j - pad, ww, ow, stride)
                        acc = 0
                        for oy in range(oy_lo, oy_hi):
                            iy = oy * stride + i - pad
                            if stride == 1:
                                for ox in range(ox_lo, ox_hi):
                                    acc = acc + g[ni, 0, oy, ox] * x[ni, ci, iy, ox + j - pad]
                            else:
                                for ox in range(ox_lo, ox_hi):
                                    acc = acc + g[ni, 0, oy, ox] * x[ni, ci, iy, ox * stride + j - pad]
                        out[ci, i, j] += acc
    return out_arr


def _maxpool_forward(real[:, :, :, ::1] x, int k, int stride, int pad):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t oh = (h + 2 * pad - k) // stride + 1
    cdef Py_ssize_t ow = (w + 2 * pad - k) // stride + 1
    cdef Py_ssize_t wp = w + 2 * pad
    dtype = np.float32 if real is float else np.float64
    out_arr = np.empty((n, c, oh, ow), dtype=dtype)
    idx_arr = np.empty((n, c, oh, ow), dtype=np.int64)
    cdef real[:, :, :, ::1] out = out_arr
    cdef cnp.int64_t[:, :, :, ::1] idx = idx_arr
    cdef Py_ssize_t ni, ci, oy, ox, i, j, iy, ix, best_i, y0, y1, x0, x1
    cdef real best, v
    with nogil:
        for ni in range(n):
            for ci in range(c):
                for oy in range(oh):
                    y0 = oy * stride - pad
                    y1 = y0 + k
                    if y0 < 0:
                        y0 = 0
                    if y1 > h:
                        y1 = h
                    for ox in range(ow):
                        x0 = ox * stride - pad
                        x1 = x0 + k
                        if x0 < 0:
                            x0 = 0
                        if x1 > w:
                            x1 = w
                        if y0 >= y1 or x0 >= x1:
                            out[ni, ci, oy, ox] = -INFINITY
                            idx[ni, ci, oy, ox] = -1
                            continue
                        best = x[ni, ci, y0, x0]
                        best_i = (y0 + pad) * wp + (x0 + pad)
                        for iy in range(y0, y1):
                            for ix in range(x0, x1):
                                v = x[ni, ci, iy, ix]
                                if v > best:
                                    best = v
                                    best_i = (iy + pad) * wp + (ix + pad)
                        out[ni, ci, oy, ox] = best
                        idx[ni, ci, oy, ox] = best_i
    return out_arr, idx_arr


def _maxpool_backward(real[:, :, :, ::1] gout, cnp.int64_t[:, :, :, ::1] idx,
                      Py_ssize_t n, Py_ssize_t c, Py_ssize_t h, Py_ssize_t w, int pad):
    cdef Py_ssize_t oh = gout.shape[2], ow = gout.shape[3]
    cdef Py_ssize_t wp = w + 2 * pad
    dtype = np.float32 if real is float else np.float64
    out_arr = np.zeros((n, c, h, w), dtype=dtype)
    cdef real[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t ni, ci, oy, ox, flat, iy, ix
    with nogil:
        for ni in range(n):
            for ci in range(c):
                for oy in range(oh):
                    for ox in range(ow):
                        flat = idx[ni, ci, oy, ox]
                        if flat < 0:
                            continue
                        iy = flat // wp - pad
                        ix = flat % wp - pad
                        out[ni, ci, iy, ix] += gout[ni, ci, oy, ox]
    return out_arr
