"""Pure-numpy kernel implementations.

Fallback backend when the compiled extension is unavailable. Loops run over
kernel offsets (kh*kw vectorized slice ops), not over pixels, so this is
usable for real training, just slower than the native core.
"""

import numpy as np

NAME = "numpy"


def conv_out_size(size, k, stride, pad):
    return (size + 2 * pad - k) // stride + 1


def im2col(x, kh, kw, stride, pad):
    """(N,C,H,W) -> (N, C*kh*kw, OH*OW) patch matrix."""
    n, c, h, w = x.shape
    oh = conv_out_size(h, kh, stride, pad)
    ow = conv_out_size(w, kw, stride, pad)
    if pad > 0:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = np.empty((n, c, kh, kw, oh, ow), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = x[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride]
    return cols.reshape(n, c * kh * kw, oh * ow)


def col2im(cols, shape, kh, kw, stride, pad):
    """Adjoint of im2col: scatter-add patches back to (N,C,H,W)."""
    n, c, h, w = shape
    oh = conv_out_size(h, kh, stride, pad)
    ow = conv_out_size(w, kw, stride, pad)
    cols = cols.reshape(n, c, kh, kw, oh, ow)
    out = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += cols[:, :, i, j]
    if pad > 0:
        out = out[:, :, pad : pad + h, pad : pad + w]
    return out


def conv1out_forward(x, w, stride, pad):
    """Single-output-channel convolution; w is (1,C,kh,kw)."""
    _, c, kh, kw = w.shape
    n = x.shape[0]
    cols = im2col(x, kh, kw, stride, pad)
    oh = conv_out_size(x.shape[2], kh, stride, pad)
    ow = conv_out_size(x.shape[3], kw, stride, pad)
    return (w.reshape(1, -1) @ cols).reshape(n, 1, oh, ow)


def conv1out_backward_input(g, w, shape, stride, pad):
    _, c, kh, kw = w.shape
    n = g.shape[0]
    gcols = w.reshape(-1, 1) @ g.reshape(n, 1, -1)
    return col2im(gcols, shape, kh, kw, stride, pad)


def conv1out_backward_weight(g, x, kh, kw, stride, pad):
    n = x.shape[0]
    cols = im2col(x, kh, kw, stride, pad)
    gw = np.matmul(g.reshape(n, 1, -1), cols.transpose(0, 2, 1)).sum(axis=0)
    return gw.reshape(1, x.shape[1], kh, kw)


def maxpool_forward(x, k, stride, pad):
    """Returns (out, idx); idx is the flat padded-plane index of each max."""
    n, c, h, w = x.shape
    oh = conv_out_size(h, k, stride, pad)
    ow = conv_out_size(w, k, stride, pad)
    hp, wp = h + 2 * pad, w + 2 * pad
    if pad > 0:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)), constant_values=-np.inf)
    out = np.full((n, c, oh, ow), -np.inf, dtype=x.dtype)
    idx = np.full((n, c, oh, ow), -1, dtype=np.int64)
    oy = np.arange(oh)[:, None] * stride
    ox = np.arange(ow)[None, :] * stride
    for i in range(k):
        for j in range(k):
            window = x[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride]
            take = window > out
            out = np.where(take, window, out)
            flat = (oy + i) * wp + (ox + j)
            idx = np.where(take, flat, idx)
    return out, idx


def maxpool_backward(gout, idx, shape, k, stride, pad):
    n, c, h, w = shape
    oh, ow = gout.shape[2], gout.shape[3]
    wp = w + 2 * pad
    gx = np.zeros((n, c, h + 2 * pad, wp), dtype=gout.dtype)
    oy = np.arange(oh)[:, None] * stride
    ox = np.arange(ow)[None, :] * stride
    for i in range(k):
        for j in range(k):
            hit = idx == (oy + i) * wp + (ox + j)
            gx[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += gout * hit
    if pad > 0:
        gx = np.ascontiguousarray(gx[:, :, pad : pad + h, pad : pad + w])
    return gx
