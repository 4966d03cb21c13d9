"""Differentiable primitives over autograd.Tensor.

Broadcasting is deliberately narrow: besides scalars and same-shape
operands, binary ops accept only the two descriptor patterns the attention
blocks need, a per-channel map (N,C,1,1) and a per-position map (N,1,H,W)
against an (N,C,H,W) tensor. Anything wider must be materialized by the
caller (constants are cheap to tile).
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .autograd import ShapeError, Tensor, accumulate, register


def _t(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else np.float32
    return Tensor(np.asarray(x, dtype=dtype))


def const(data, dtype=np.float32):
    """Non-differentiable tensor (targets, masks, grids)."""
    return Tensor(np.asarray(data, dtype=dtype))


def _check_dtypes(a, b, opname):
    if a.dtype != b.dtype:
        raise TypeError(f"{opname}: mixed dtypes {a.dtype} vs {b.dtype}")


def _check_broadcast(sa, sb, opname):
    """Permit equal shapes, scalars, and the two 4-d descriptor patterns."""
    if sa == sb or sa == () or sb == ():
        return
    if len(sa) == len(sb) == 4:
        mism = tuple(i for i in range(4) if sa[i] != sb[i])
        ok_desc = {(2, 3), (1,), (1, 2, 3)}  # per-channel, per-position, per-sample scalar map
        if mism in ok_desc and all(1 in (sa[i], sb[i]) for i in mism):
            return
    raise ShapeError(f"{opname}: shapes {sa} and {sb} are not broadcast-compatible here")


def _reduce_to(g, shape):
    """Sum adjoint over axes that were broadcast in the forward pass."""
    if g.shape == shape:
        return g
    if shape == ():
        return g.sum()
    axes = tuple(i for i in range(len(shape)) if shape[i] == 1 and g.shape[i] != 1)
    return g.sum(axis=axes, keepdims=True)


# ---------------------------------------------------------------------------
# arithmetic


def add(a, b):
    a, b = _t(a), _t(b, like=a)
    _check_dtypes(a, b, "add")
    _check_broadcast(a.shape, b.shape, "add")
    out = Tensor(a.data + b.data)

    def bwd(g):
        accumulate(a, _reduce_to(g, a.shape))
        accumulate(b, _reduce_to(g, b.shape))

    return register(out, (a, b), bwd)


def sub(a, b):
    a, b = _t(a), _t(b, like=a)
    _check_dtypes(a, b, "sub")
    _check_broadcast(a.shape, b.shape, "sub")
    out = Tensor(a.data - b.data)

    def bwd(g):
        accumulate(a, _reduce_to(g, a.shape))
        accumulate(b, -_reduce_to(g, b.shape))

    return register(out, (a, b), bwd)


def mul(a, b):
    a, b = _t(a), _t(b, like=a)
    _check_dtypes(a, b, "mul")
    _check_broadcast(a.shape, b.shape, "mul")
    out = Tensor(a.data * b.data)

    def bwd(g):
        accumulate(a, _reduce_to(g * b.data, a.shape))
        accumulate(b, _reduce_to(g * a.data, b.shape))

    return register(out, (a, b), bwd)


def div(a, b):
    a, b = _t(a), _t(b, like=a)
    _check_dtypes(a, b, "div")
    _check_broadcast(a.shape, b.shape, "div")
    out = Tensor(a.data / b.data)

    def bwd(g):
        accumulate(a, _reduce_to(g / b.data, a.shape))
        accumulate(b, _reduce_to(-g * a.data / (b.data * b.data), b.shape))

    return register(out, (a, b), bwd)


def neg(a):
    out = Tensor(-a.data)

    def bwd(g):
        accumulate(a, -g)

    return register(out, (a,), bwd)


def minimum(a, b):
    """Elementwise min; ties route the gradient to `a`."""
    a, b = _t(a), _t(b, like=a)
    _check_dtypes(a, b, "minimum")
    _check_broadcast(a.shape, b.shape, "minimum")
    take_a = a.data <= b.data
    out = Tensor(np.where(take_a, a.data, b.data))

    def bwd(g):
        accumulate(a, _reduce_to(g * take_a, a.shape))
        accumulate(b, _reduce_to(g * ~take_a, b.shape))

    return register(out, (a, b), bwd)


def maximum(a, b):
    """Elementwise max; ties route the gradient to `a`."""
    a, b = _t(a), _t(b, like=a)
    _check_dtypes(a, b, "maximum")
    _check_broadcast(a.shape, b.shape, "maximum")
    take_a = a.data >= b.data
    out = Tensor(np.where(take_a, a.data, b.data))

    def bwd(g):
        accumulate(a, _reduce_to(g * take_a, a.shape))
        accumulate(b, _reduce_to(g * ~take_a, b.shape))

    return register(out, (a, b), bwd)


# ---------------------------------------------------------------------------
# elementwise functions


def exp(a):
    e = np.exp(a.data)
    out = Tensor(e)

    def bwd(g):
        accumulate(a, g * e)

    return register(out, (a,), bwd)


def log(a):
    out = Tensor(np.log(a.data))

    def bwd(g):
        accumulate(a, g / a.data)

    return register(out, (a,), bwd)


def sqrt(a):
    s = np.sqrt(a.data)
    out = Tensor(s)

    def bwd(g):
        accumulate(a, g / (2.0 * s))

    return register(out, (a,), bwd)


def arctan(a):
    out = Tensor(np.arctan(a.data))

    def bwd(g):
        accumulate(a, g / (1.0 + a.data * a.data))

    return register(out, (a,), bwd)


def _sigmoid(x):
    # tanh form: stable at both tails, single vectorized pass
    return 0.5 * np.tanh(0.5 * x) + 0.5


def _softplus(x):
    # exact for moderate x, linear branch avoids exp overflow
    out = np.where(x > 20.0, x, np.log1p(np.exp(np.minimum(x, 20.0))))
    return out.astype(x.dtype, copy=False)


def sigmoid(a):
    s = _sigmoid(a.data)
    out = Tensor(s)

    def bwd(g):
        accumulate(a, g * s * (1.0 - s))

    return register(out, (a,), bwd)


def softplus(a):
    out = Tensor(_softplus(a.data))

    def bwd(g):
        accumulate(a, g * _sigmoid(a.data))

    return register(out, (a,), bwd)


def mish(a):
    """x * tanh(softplus(x))."""
    th = np.tanh(_softplus(a.data))
    out = Tensor(a.data * th)

    def bwd(g):
        accumulate(a, g * (th + a.data * (1.0 - th * th) * _sigmoid(a.data)))

    return register(out, (a,), bwd)


def leaky_relu(a, slope=0.1):
    pos = a.data > 0
    out = Tensor(np.where(pos, a.data, slope * a.data))

    def bwd(g):
        accumulate(a, g * np.where(pos, 1.0, slope).astype(a.dtype))

    return register(out, (a,), bwd)


def relu(a):
    pos = a.data > 0
    out = Tensor(np.where(pos, a.data, 0.0).astype(a.dtype))

    def bwd(g):
        accumulate(a, g * pos)

    return register(out, (a,), bwd)


# ---------------------------------------------------------------------------
# reductions and reshaping


def tsum(a):
    out = Tensor(np.asarray(a.data.sum(), dtype=a.dtype))

    def bwd(g):
        accumulate(a, np.full_like(a.data, g))

    return register(out, (a,), bwd)


def tmean(a):
    n = a.size
    out = Tensor(np.asarray(a.data.mean(), dtype=a.dtype))

    def bwd(g):
        accumulate(a, np.full_like(a.data, g / n))

    return register(out, (a,), bwd)


def reshape(a, shape):
    out = Tensor(a.data.reshape(shape))

    def bwd(g):
        accumulate(a, g.reshape(a.shape))

    return register(out, (a,), bwd)


def getitem(a, idx):
    """Basic slicing/integer indexing with scatter backward."""
    out = Tensor(a.data[idx].copy())

    def bwd(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        accumulate(a, full)

    return register(out, (a,), bwd)


def concat(tensors, axis):
    tensors = list(tensors)
    base = list(tensors[0].shape)
    for t in tensors[1:]:
        other = list(t.shape)
        if len(other) != len(base) or any(
            i != axis and other[i] != base[i] for i in range(len(base))
        ):
            raise ShapeError(
                f"concat: shape {t.shape} incompatible with {tensors[0].shape} on axis {axis}"
            )
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            accumulate(t, g[tuple(sl)])

    return register(out, tuple(tensors), bwd)


def matmul(a, b, bias=None):
    """(N,D) @ (D,K) with optional (K,) bias."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    y = a.data @ b.data
    if bias is not None:
        y = y + bias.data
    out = Tensor(y)
    inputs = (a, b) if bias is None else (a, b, bias)

    def bwd(g):
        accumulate(a, g @ b.data.T)
        accumulate(b, a.data.T @ g)
        if bias is not None:
            accumulate(bias, g.sum(axis=0))

    return register(out, inputs, bwd)


# ---------------------------------------------------------------------------
# convolution and pooling


def conv2d(x, weight, bias=None, stride=1, pad=0):
    """NCHW convolution; weight is (out_ch, in_ch, kh, kw)."""
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"conv2d: need 4-d input/weight, got {x.shape} and {weight.shape}")
    n, c, h, w = x.shape
    oc, ic, kh, kw = weight.shape
    if c != ic:
        raise ShapeError(
            f"conv2d: input has {c} channels but weight {weight.shape} expects {ic} "
            f"(input shape {x.shape})"
        )
    if stride < 1 or pad < 0:
        raise ValueError(f"conv2d: stride={stride}, pad={pad}")
    _check_dtypes(x, weight, "conv2d")
    oh = kernels.conv_out_size(h, kh, stride, pad)
    ow = kernels.conv_out_size(w, kw, stride, pad)
    if oh < 1 or ow < 1:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} too large for input {h}x{w} with pad {pad}")
    inputs = (x, weight) if bias is None else (x, weight, bias)

    if oc == 1:
        # spatial-attention style conv: direct kernel avoids the kh*kw-fold
        # im2col blow-up that dominates 7x7 single-channel maps
        y = kernels.conv1out_forward(x.data, weight.data, stride, pad)
        if bias is not None:
            y += bias.data.reshape(1, 1, 1, 1)
        out = Tensor(y)

        def bwd1(g):
            if weight.requires_grad:
                accumulate(
                    weight, kernels.conv1out_backward_weight(g, x.data, kh, kw, stride, pad)
                )
            if bias is not None and bias.requires_grad:
                accumulate(bias, g.sum(keepdims=False).reshape(1))
            if x.requires_grad:
                accumulate(
                    x, kernels.conv1out_backward_input(g, weight.data, x.shape, stride, pad)
                )

        return register(out, inputs, bwd1)

    if kh == 1 and kw == 1 and stride == 1 and pad == 0:
        cols = x.data.reshape(n, c, h * w)  # pointwise conv: plain batched matmul
    else:
        cols = kernels.im2col(x.data, kh, kw, stride, pad)  # (N, C*kh*kw, OH*OW)
    w2 = weight.data.reshape(oc, -1)
    y = np.matmul(w2, cols)
    if bias is not None:
        y += bias.data.reshape(1, oc, 1)
    out = Tensor(y.reshape(n, oc, oh, ow))

    def bwd(g):
        g2 = g.reshape(n, oc, -1)
        if weight.requires_grad:
            gw = np.matmul(g2, cols.transpose(0, 2, 1)).sum(axis=0)
            accumulate(weight, gw.reshape(weight.shape))
        if bias is not None and bias.requires_grad:
            accumulate(bias, g2.sum(axis=(0, 2)))
        if x.requires_grad:
            gcols = np.matmul(w2.T, g2)
            if kh == 1 and kw == 1 and stride == 1 and pad == 0:
                accumulate(x, gcols.reshape(n, c, h, w))
            else:
                accumulate(x, kernels.col2im(gcols, (n, c, h, w), kh, kw, stride, pad))

    return register(out, inputs, bwd)


def batch_norm2d(
    x,
    gamma,
    beta,
    running_mean=None,
    running_var=None,
    eps=1e-5,
    momentum=0.1,
    training=True,
):
    """Per-channel normalization; running stats are plain arrays, updated in place."""
    n, c, h, w = x.shape
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"batch_norm2d: gamma/beta need shape ({c},), got {gamma.shape}")
    if eps <= 0:
        raise ValueError("batch_norm2d: eps must be > 0")
    _check_dtypes(x, gamma, "batch_norm2d")

    if training:
        mean = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        if running_mean is not None:
            cnt = n * h * w
            unbiased = var * cnt / max(cnt - 1, 1)
            running_mean *= 1.0 - momentum
            running_mean += momentum * mean
            running_var *= 1.0 - momentum
            running_var += momentum * unbiased
    else:
        if running_mean is None or running_var is None:
            raise ValueError("batch_norm2d: inference mode needs running statistics")
        mean, var = running_mean, running_var

    inv = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    xhat = (x.data - mean.reshape(1, c, 1, 1).astype(x.dtype)) * inv.reshape(1, c, 1, 1)
    out = Tensor(gamma.data.reshape(1, c, 1, 1) * xhat + beta.data.reshape(1, c, 1, 1))

    def bwd(g):
        accumulate(beta, g.sum(axis=(0, 2, 3)))
        accumulate(gamma, (g * xhat).sum(axis=(0, 2, 3)))
        if not x.requires_grad:
            return
        gxhat = g * gamma.data.reshape(1, c, 1, 1)
        if training:
            m = gxhat.mean(axis=(0, 2, 3), keepdims=True)
            mx = (gxhat * xhat).mean(axis=(0, 2, 3), keepdims=True)
            accumulate(x, inv.reshape(1, c, 1, 1) * (gxhat - m - xhat * mx))
        else:
            accumulate(x, gxhat * inv.reshape(1, c, 1, 1))

    return register(out, (x, gamma, beta), bwd)


def max_pool2d(x, kernel, stride=1, pad=0):
    n, c, h, w = x.shape
    if kernel > min(h, w) + 2 * pad:
        raise ShapeError(f"max_pool2d: kernel {kernel} exceeds padded input {h}x{w} (pad {pad})")
    y, idx = kernels.maxpool_forward(x.data, kernel, stride, pad)
    out = Tensor(y)

    def bwd(g):
        accumulate(x, kernels.maxpool_backward(g, idx, (n, c, h, w), kernel, stride, pad))

    return register(out, (x,), bwd)


def global_avg_pool(x):
    """(N,C,H,W) -> (N,C,1,1), the spatial mean per channel."""
    n, c, h, w = x.shape
    out = Tensor(x.data.mean(axis=(2, 3), keepdims=True))

    def bwd(g):
        accumulate(x, np.broadcast_to(g / (h * w), x.shape).astype(x.dtype))

    return register(out, (x,), bwd)


def global_max_pool(x):
    """(N,C,H,W) -> (N,C,1,1); gradient flows to the (first) argmax."""
    n, c, h, w = x.shape
    flat = x.data.reshape(n, c, -1)
    am = flat.argmax(axis=2)
    out = Tensor(np.take_along_axis(flat, am[:, :, None], axis=2).reshape(n, c, 1, 1))

    def bwd(g):
        gx = np.zeros_like(flat)
        np.put_along_axis(gx, am[:, :, None], g.reshape(n, c, 1), axis=2)
        accumulate(x, gx.reshape(x.shape))

    return register(out, (x,), bwd)


def channel_max(x):
    """(N,C,H,W) -> (N,1,H,W) max over channels."""
    am = x.data.argmax(axis=1, keepdims=True)
    out = Tensor(np.take_along_axis(x.data, am, axis=1))

    def bwd(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, am, g, axis=1)
        accumulate(x, gx)

    return register(out, (x,), bwd)


def channel_mean(x):
    c = x.shape[1]
    out = Tensor(x.data.mean(axis=1, keepdims=True))

    def bwd(g):
        accumulate(x, np.broadcast_to(g / c, x.shape).astype(x.dtype))

    return register(out, (x,), bwd)


def upsample_nearest2x(x):
    n, c, h, w = x.shape
    out = Tensor(np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3))

    def bwd(g):
        accumulate(x, g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)))

    return register(out, (x,), bwd)


def dropblock(x, keep_prob, block_size, training, rng):
    """Zero contiguous square regions and rescale survivors (training only).

    The center rate is calibrated so the expected zeroed fraction is about
    (1 - keep_prob). Inference mode and keep_prob == 1 are identity.
    """
    if not 0.0 < keep_prob <= 1.0:
        raise ValueError(f"dropblock: keep_prob {keep_prob} outside (0, 1]")
    if not training or keep_prob >= 1.0:
        return x
    n, c, h, w = x.shape
    if block_size % 2 == 0 or block_size > min(h, w):
        raise ShapeError(f"dropblock: block_size {block_size} invalid for {h}x{w} map")
    if rng is None:
        raise ValueError("dropblock: training mode needs an rng")

    half = block_size // 2
    valid_h = h - block_size + 1
    valid_w = w - block_size + 1
    gamma = (1.0 - keep_prob) / block_size**2 * (h * w) / (valid_h * valid_w)
    centers = np.zeros((n, c, h, w), dtype=x.dtype)
    draw = rng.random((n, c, valid_h, valid_w)) < gamma
    centers[:, :, half : half + valid_h, half : half + valid_w] = draw
    blocks, _ = kernels.maxpool_forward(centers, block_size, 1, half)
    keep = (blocks <= 0).astype(x.dtype)
    kept = keep.sum(axis=(2, 3), keepdims=True)
    scale = np.where(kept > 0, (h * w) / np.maximum(kept, 1.0), 0.0).astype(x.dtype)
    mask = keep * scale
    out = Tensor(x.data * mask)

    def bwd(g):
        accumulate(x, g * mask)

    return register(out, (x,), bwd)


# ---------------------------------------------------------------------------
# composites


def bce_with_logits(logits, target):
    """Numerically-stable binary cross-entropy map; target is a constant tensor."""
    return sub(softplus(logits), mul(logits, target))


# operator sugar ------------------------------------------------------------

Tensor.__add__ = add
Tensor.__radd__ = lambda a, b: add(a, b)
Tensor.__sub__ = sub
Tensor.__rsub__ = lambda a, b: sub(_t(b, like=a), a)
Tensor.__mul__ = mul
Tensor.__rmul__ = lambda a, b: mul(a, b)
Tensor.__truediv__ = div
Tensor.__rtruediv__ = lambda a, b: div(_t(b, like=a), a)
Tensor.__neg__ = neg
Tensor.__getitem__ = getitem
Tensor.sum = tsum
Tensor.mean = tmean
Tensor.reshape = reshape
