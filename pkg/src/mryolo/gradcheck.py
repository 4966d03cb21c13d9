"""Central finite-difference verification of the autodiff engine.

Checks run in float64 regardless of the production float32 default; the
perturbation is scaled per element. Stochastic ops are made repeatable by
reseeding inside the loss closure, so the sampled mask is identical across
finite-difference evaluations.
"""

from __future__ import annotations

import numpy as np

from . import ops
from .autograd import Tape, Tensor, backward

DEFAULT_TOL = 1e-3


def max_rel_error(build_loss, tensors, h=1e-3, floor=1e-3):
    """Max relative disagreement between taped and finite-difference gradients.

    build_loss() must recompute the scalar loss from the current contents of
    `tensors` (which are perturbed in place during the sweep).
    """
    for t in tensors:
        if not t.requires_grad:
            raise ValueError("all checked tensors must have requires_grad=True")
        t.zero_grad()
    with Tape():
        loss = build_loss()
    backward(loss)
    analytic = [
        t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in tensors
    ]

    worst = 0.0
    for t, ana in zip(tensors, analytic):
        flat = t.data.reshape(-1)
        fd = np.zeros_like(flat)
        for i in range(flat.size):
            v = flat[i]
            step = h * max(1.0, abs(v))
            flat[i] = v + step
            fp = float(build_loss().data)
            flat[i] = v - step
            fm = float(build_loss().data)
            flat[i] = v
            fd[i] = (fp - fm) / (2.0 * step)
        ana = ana.reshape(-1)
        denom = np.maximum(np.maximum(np.abs(ana), np.abs(fd)), floor)
        worst = max(worst, float(np.max(np.abs(ana - fd) / denom)))
    return worst


def _param(rng, shape, scale=1.0, keep_away=0.0):
    """Random float64 leaf; values within keep_away of zero are pushed out."""
    data = rng.standard_normal(shape) * scale
    if keep_away > 0.0:
        data = data + np.where(data >= 0, keep_away, -keep_away)
    return Tensor(data, requires_grad=True, dtype=np.float64)


def _distinct(rng, shape, gap=0.05):
    """Values with pairwise gaps > `gap` so max-type ops keep a stable argmax."""
    n = int(np.prod(shape))
    vals = (rng.permutation(n) * 3.0 * gap) + rng.uniform(0, gap, size=n)
    return Tensor(vals.reshape(shape) - vals.mean(), requires_grad=True, dtype=np.float64)


# --- per-primitive checks ---------------------------------------------------


def _check_add(rng):
    a, b = _param(rng, (3, 4)), _param(rng, (3, 4))
    return max_rel_error(lambda: ops.tsum(ops.mul(ops.add(a, b), a)), [a, b])


def _check_sub(rng):
    a, b = _param(rng, (3, 4)), _param(rng, (3, 4))
    return max_rel_error(lambda: ops.tsum(ops.mul(ops.sub(a, b), b)), [a, b])


def _check_mul_broadcast(rng):
    a = _param(rng, (2, 3, 4, 4))
    chan = _param(rng, (2, 3, 1, 1))
    pos = _param(rng, (2, 1, 4, 4))
    return max_rel_error(
        lambda: ops.tsum(ops.mul(ops.mul(a, chan), pos)), [a, chan, pos]
    )


def _check_div(rng):
    a = _param(rng, (3, 4))
    b = _param(rng, (3, 4), keep_away=0.5)
    return max_rel_error(lambda: ops.tsum(ops.div(a, b)), [a, b])


def _check_minimum(rng):
    a, b = _distinct(rng, (3, 4)), _distinct(rng, (3, 4))
    return max_rel_error(lambda: ops.tsum(ops.minimum(a, b)), [a, b])


def _check_maximum(rng):
    a, b = _distinct(rng, (3, 4)), _distinct(rng, (3, 4))
    return max_rel_error(lambda: ops.tsum(ops.maximum(a, b)), [a, b])


def _check_exp(rng):
    a = _param(rng, (3, 4), scale=0.5)
    return max_rel_error(lambda: ops.tsum(ops.exp(a)), [a])


def _check_log(rng):
    a = _param(rng, (3, 4))
    a.data = np.abs(a.data) + 0.5
    return max_rel_error(lambda: ops.tsum(ops.log(a)), [a])


def _check_sqrt(rng):
    a = _param(rng, (3, 4))
    a.data = np.abs(a.data) + 0.5
    return max_rel_error(lambda: ops.tsum(ops.sqrt(a)), [a])


def _check_arctan(rng):
    a = _param(rng, (3, 4))
    return max_rel_error(lambda: ops.tsum(ops.arctan(a)), [a])


def _check_sigmoid(rng):
    a = _param(rng, (3, 4), scale=2.0)
    return max_rel_error(lambda: ops.tsum(ops.sigmoid(a)), [a])


def _check_softplus(rng):
    a = _param(rng, (3, 4), scale=2.0)
    return max_rel_error(lambda: ops.tsum(ops.softplus(a)), [a])


def _check_mish(rng):
    a = _param(rng, (3, 4), scale=2.0)
    return max_rel_error(lambda: ops.tsum(ops.mish(a)), [a])


def _check_leaky_relu(rng):
    a = _param(rng, (3, 4), keep_away=0.05)
    return max_rel_error(lambda: ops.tsum(ops.leaky_relu(a)), [a])


def _check_relu(rng):
    a = _param(rng, (3, 4), keep_away=0.05)
    return max_rel_error(lambda: ops.tsum(ops.relu(a)), [a])


def _check_mean(rng):
    a = _param(rng, (3, 4))
    return max_rel_error(lambda: ops.tmean(ops.mul(a, a)), [a])


def _check_reshape_slice(rng):
    a = _param(rng, (2, 6))
    return max_rel_error(
        lambda: ops.tsum(ops.mul(ops.getitem(ops.reshape(a, (3, 4)), (slice(1, 3),)), 2.0)),
        [a],
    )


def _check_concat(rng):
    a, b = _param(rng, (2, 3)), _param(rng, (2, 2))
    return max_rel_error(
        lambda: ops.tsum(ops.mul(ops.concat([a, b], axis=1), 1.5)), [a, b]
    )


def _check_matmul(rng):
    a, b, c = _param(rng, (3, 4)), _param(rng, (4, 2)), _param(rng, (2,))
    return max_rel_error(lambda: ops.tsum(ops.matmul(a, b, c)), [a, b, c])


def _check_conv2d(rng):
    x = _param(rng, (2, 3, 5, 5))
    w = _param(rng, (4, 3, 3, 3), scale=0.5)
    b = _param(rng, (4,))
    return max_rel_error(
        lambda: ops.tmean(ops.conv2d(x, w, b, stride=2, pad=1)), [x, w, b]
    )


def _check_batch_norm2d(rng):
    x = _param(rng, (3, 4, 4, 4))
    g = _param(rng, (4,), keep_away=0.2)
    b = _param(rng, (4,))
    return max_rel_error(
        lambda: ops.tmean(ops.mul(ops.batch_norm2d(x, g, b, training=True), x)),
        [x, g, b],
    )


def _check_max_pool2d(rng):
    x = _distinct(rng, (2, 2, 6, 6))
    return max_rel_error(lambda: ops.tsum(ops.max_pool2d(x, 3, stride=2, pad=1)), [x])


def _check_global_avg_pool(rng):
    x = _param(rng, (2, 3, 4, 4))
    return max_rel_error(lambda: ops.tsum(ops.global_avg_pool(x)), [x])


def _check_global_max_pool(rng):
    x = _distinct(rng, (2, 3, 4, 4))
    return max_rel_error(lambda: ops.tsum(ops.global_max_pool(x)), [x])


def _check_channel_max(rng):
    x = _distinct(rng, (2, 4, 3, 3))
    return max_rel_error(lambda: ops.tsum(ops.channel_max(x)), [x])


def _check_channel_mean(rng):
    x = _param(rng, (2, 4, 3, 3))
    return max_rel_error(lambda: ops.tsum(ops.mul(ops.channel_mean(x), 2.0)), [x])


def _check_upsample(rng):
    x = _param(rng, (2, 3, 3, 3))
    return max_rel_error(lambda: ops.tsum(ops.mul(ops.upsample_nearest2x(x), 1.5)), [x])


def _check_dropblock(rng):
    x = _param(rng, (2, 3, 9, 9))
    seed = int(rng.integers(1 << 31))

    def loss():
        r = np.random.default_rng(seed)  # frozen mask across FD evaluations
        return ops.tsum(ops.dropblock(x, 0.85, 3, True, r))

    return max_rel_error(loss, [x])


def _check_bce(rng):
    x = _param(rng, (3, 4), scale=2.0)
    t = ops.const((rng.random((3, 4)) > 0.5).astype(np.float64), dtype=np.float64)
    return max_rel_error(lambda: ops.tmean(ops.bce_with_logits(x, t)), [x])


PRIMITIVE_CHECKS = {
    "add": _check_add,
    "sub": _check_sub,
    "mul(broadcast)": _check_mul_broadcast,
    "div": _check_div,
    "minimum": _check_minimum,
    "maximum": _check_maximum,
    "exp": _check_exp,
    "log": _check_log,
    "sqrt": _check_sqrt,
    "arctan": _check_arctan,
    "sigmoid": _check_sigmoid,
    "softplus": _check_softplus,
    "mish": _check_mish,
    "leaky_relu": _check_leaky_relu,
    "relu": _check_relu,
    "mean": _check_mean,
    "reshape+slice": _check_reshape_slice,
    "concat": _check_concat,
    "matmul": _check_matmul,
    "conv2d": _check_conv2d,
    "batch_norm2d": _check_batch_norm2d,
    "max_pool2d": _check_max_pool2d,
    "global_avg_pool": _check_global_avg_pool,
    "global_max_pool": _check_global_max_pool,
    "channel_max": _check_channel_max,
    "channel_mean": _check_channel_mean,
    "upsample_nearest2x": _check_upsample,
    "dropblock": _check_dropblock,
    "bce_with_logits": _check_bce,
}


def block_checks():
    """Finite-difference checks for the composed attention blocks."""
    from . import attention  # deferred: attention builds on ops

    return {
        "rca_block": attention.gradcheck_rca,
        "rsa_block": attention.gradcheck_rsa,
        "mrham_block": attention.gradcheck_mrham,
        "cbam_block": attention.gradcheck_cbam,
    }


def run_all(seeds=range(20), include_blocks=True, tol=DEFAULT_TOL):
    """Run every registered check over `seeds`; returns {name: max_rel_err}."""
    checks = dict(PRIMITIVE_CHECKS)
    if include_blocks:
        checks.update(block_checks())
    results = {}
    for name, fn in checks.items():
        worst = 0.0
        for seed in seeds:
            worst = max(worst, fn(np.random.default_rng(seed)))
        results[name] = worst
    return results
