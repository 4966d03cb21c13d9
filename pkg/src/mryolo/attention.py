"""Residual channel/spatial attention and the hybrid composite.

ResidualChannelAttention gates each channel by a squeezed global descriptor
pushed through a two-layer 1x1-conv bottleneck; ResidualSpatialAttention
gates each position by a single-channel 7x7 convolution. Both add the input
back after gating, so an all-zero-weight block computes 1.5x its input.
The hybrid block arranges the two in any of five ways; the sequential
channel-first order is the default. CBAM (pooling-descriptor attention,
no residual additions) is kept as the comparison baseline.
"""

from __future__ import annotations

import numpy as np

from . import ops
from .autograd import ShapeError, Tensor
from .nn import Conv2d, Module, Parameter, he_normal

ARRANGEMENTS = ("rca_only", "rsa_only", "rca_then_rsa", "rsa_then_rca", "parallel")


class ResidualChannelAttention(Module):
    def __init__(self, rng, channels, reduction=16):
        super().__init__()
        if channels % reduction != 0:
            raise ValueError(f"channels {channels} not divisible by reduction {reduction}")
        self.channels = channels
        self.reduction = reduction
        hidden = channels // reduction
        # the two gate layers are 1x1 convs on the 1x1xC descriptor, no biases
        self.squeeze = Conv2d(rng, channels, hidden, 1, bias=False)
        self.excite = Conv2d(rng, hidden, channels, 1, bias=False)

    def gate(self, x):
        """Per-channel gate in (0,1), shape (N,C,1,1)."""
        if x.shape[1] != self.channels:
            raise ShapeError(f"channel attention built for C={self.channels}, got {x.shape}")
        desc = ops.global_avg_pool(x)
        hidden = ops.leaky_relu(self.squeeze(desc), 0.1)
        return ops.sigmoid(self.excite(hidden))

    def forward(self, x):
        return ops.add(ops.mul(self.gate(x), x), x)


class ResidualSpatialAttention(Module):
    def __init__(self, rng, channels, kernel=7):
        super().__init__()
        self.channels = channels
        self.conv = Conv2d(rng, channels, 1, kernel, bias=True)

    def gate(self, x):
        """Per-position gate in (0,1), shape (N,1,H,W)."""
        if x.shape[1] != self.channels:
            raise ShapeError(f"spatial attention built for C={self.channels}, got {x.shape}")
        return ops.sigmoid(self.conv(x))

    def forward(self, x):
        return ops.add(ops.mul(self.gate(x), x), x)


class ResidualHybridAttention(Module):
    """Channel and spatial attention in one of five arrangements."""

    def __init__(self, rng, channels, reduction=16, spatial_kernel=7, mode="rca_then_rsa"):
        super().__init__()
        if mode not in ARRANGEMENTS:
            raise ValueError(f"unknown arrangement {mode!r} (choices: {ARRANGEMENTS})")
        self.mode = mode
        self.rca = (
            ResidualChannelAttention(rng, channels, reduction) if mode != "rsa_only" else None
        )
        self.rsa = (
            ResidualSpatialAttention(rng, channels, spatial_kernel) if mode != "rca_only" else None
        )

    def forward(self, x):
        if self.mode == "rca_only":
            return self.rca(x)
        if self.mode == "rsa_only":
            return self.rsa(x)
        if self.mode == "rca_then_rsa":
            return self.rsa(self.rca(x))
        if self.mode == "rsa_then_rca":
            return self.rca(self.rsa(x))
        # parallel: both gates read the same input; either branch with a zero
        # gate reduces the sum to the other branch's sequential-free form
        gated_c = ops.mul(self.rca.gate(x), x)
        gated_s = ops.mul(self.rsa.gate(x), x)
        return ops.add(ops.add(x, gated_c), gated_s)


class CBAM(Module):
    """Pooling-descriptor attention baseline: gates multiply, nothing is added."""

    def __init__(self, rng, channels, reduction=16, spatial_kernel=7):
        super().__init__()
        if channels % reduction != 0:
            raise ValueError(f"channels {channels} not divisible by reduction {reduction}")
        self.channels = channels
        hidden = channels // reduction
        self.squeeze = Conv2d(rng, channels, hidden, 1, bias=False)
        self.excite = Conv2d(rng, hidden, channels, 1, bias=False)
        self.spatial = Conv2d(rng, 2, 1, spatial_kernel, bias=True)

    def forward(self, x):
        if x.shape[1] != self.channels:
            raise ShapeError(f"CBAM built for C={self.channels}, got {x.shape}")
        # channel gate: shared bottleneck over avg- and max-pooled descriptors
        avg = ops.relu(self.squeeze(ops.global_avg_pool(x)))
        mx = ops.relu(self.squeeze(ops.global_max_pool(x)))
        chan_gate = ops.sigmoid(ops.add(self.excite(avg), self.excite(mx)))
        x = ops.mul(chan_gate, x)
        # spatial gate: 7x7 conv over stacked channelwise [max; mean] maps
        desc = ops.concat([ops.channel_max(x), ops.channel_mean(x)], axis=1)
        return ops.mul(ops.sigmoid(self.spatial(desc)), x)


# --- finite-difference check builders (used by gradcheck.run_all) -----------


def _to_float64(module):
    for _, p in module.named_parameters():
        p.data = p.data.astype(np.float64)
    return module


def _mlp_preact_margin(block, x):
    """Smallest |pre-activation| of the bottleneck, to dodge leaky/relu kinks."""
    desc = x.data.mean(axis=(2, 3))
    z = desc @ block.squeeze.weight.data.reshape(block.squeeze.weight.shape[0], -1).T
    return np.abs(z).min()


def _sample_block(rng, make, x_shape, margin_of=None):
    for _ in range(50):
        block = _to_float64(make(rng))
        x = Tensor(rng.standard_normal(x_shape), requires_grad=True, dtype=np.float64)
        if margin_of is None or margin_of(block, x) > 0.02:
            return block, x
    raise RuntimeError("could not sample a kink-free configuration")


def gradcheck_rca(rng):
    from .gradcheck import max_rel_error

    block, x = _sample_block(
        rng,
        lambda r: ResidualChannelAttention(r, 4, reduction=2),
        (1, 4, 5, 5),
        margin_of=_mlp_preact_margin,
    )
    params = [x] + block.parameters()
    return max_rel_error(lambda: ops.tmean(block(x)), params)


def gradcheck_rsa(rng):
    from .gradcheck import max_rel_error

    block, x = _sample_block(
        rng, lambda r: ResidualSpatialAttention(r, 3), (1, 3, 8, 8)
    )
    params = [x] + block.parameters()
    return max_rel_error(lambda: ops.tmean(block(x)), params)


def gradcheck_mrham(rng):
    from .gradcheck import max_rel_error

    block, x = _sample_block(
        rng,
        lambda r: ResidualHybridAttention(r, 4, reduction=2, mode="rca_then_rsa"),
        (1, 4, 5, 5),
        margin_of=lambda b, x: _mlp_preact_margin(b.rca, x),
    )
    params = [x] + block.parameters()
    return max_rel_error(lambda: ops.tmean(block(x)), params)


def gradcheck_cbam(rng):
    from .gradcheck import max_rel_error

    def distinct_input(r, shape):
        n = int(np.prod(shape))
        vals = r.permutation(n) * 0.15 + r.uniform(0, 0.05, size=n)
        return Tensor(vals.reshape(shape) - vals.mean(), requires_grad=True, dtype=np.float64)

    def margins(block, x):
        # every max/relu selection must sit clear of the FD perturbation
        desc_avg = x.data.mean(axis=(2, 3))
        desc_max = x.data.max(axis=(2, 3))
        wsq = block.squeeze.weight.data.reshape(2, 4)
        wex = block.excite.weight.data.reshape(4, 2)
        za, zm = desc_avg @ wsq.T, desc_max @ wsq.T
        logits = np.maximum(za, 0) @ wex.T + np.maximum(zm, 0) @ wex.T
        gate = 1.0 / (1.0 + np.exp(-logits))
        gated = np.sort(x.data * gate[:, :, None, None], axis=1)
        top2 = (gated[:, -1] - gated[:, -2]).min()
        return min(np.abs(za).min(), np.abs(zm).min(), top2)

    for _ in range(100):
        block = _to_float64(CBAM(rng, 4, reduction=2))
        x = distinct_input(rng, (1, 4, 5, 5))
        if margins(block, x) > 0.02:
            break
    else:
        raise RuntimeError("could not sample a kink-free CBAM configuration")
    params = [x] + block.parameters()
    return max_rel_error(lambda: ops.tmean(block(x)), params)
