"""Minimal layer/module system over the autodiff ops.

Modules register Parameters (trainable tensors), Buffers (state arrays such
as batch-norm running statistics) and child modules by attribute assignment.
Weights are immutable during inference; training mutates them from a single
optimizer stream.
"""

from __future__ import annotations

import numpy as np

from . import ops
from .autograd import Tensor


class Parameter(Tensor):
    """Trainable tensor; `decay` marks participation in L2 weight decay."""

    __slots__ = ("decay",)

    def __init__(self, data, decay=True, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.decay = decay


class Buffer:
    """Non-trainable state carried through checkpoints (e.g. running stats)."""

    __slots__ = ("data",)

    def __init__(self, data):
        self.data = np.asarray(data, dtype=np.float32)


class Module:
    def __init__(self):
        self.training = True

    def __setattr__(self, name, value):
        object.__setattr__(self, name, value)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def _children(self):
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, ModuleList):
                for i, m in enumerate(value):
                    yield f"{name}.{i}", m

    def modules(self):
        yield self
        for _, child in self._children():
            yield from child.modules()

    def named_parameters(self, prefix=""):
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                yield prefix + name, value
        for name, child in self._children():
            yield from child.named_parameters(prefix + name + ".")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix=""):
        for name, value in vars(self).items():
            if isinstance(value, Buffer):
                yield prefix + name, value
        for name, child in self._children():
            yield from child.named_buffers(prefix + name + ".")

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def train(self, mode=True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def state_arrays(self):
        """Ordered (name, ndarray) pairs for parameters and buffers."""
        items = [(n, p.data) for n, p in self.named_parameters()]
        items += [(n, b.data) for n, b in self.named_buffers()]
        return items

    def load_state_arrays(self, mapping):
        own = {n: p for n, p in self.named_parameters()}
        own.update({n: b for n, b in self.named_buffers()})
        missing = sorted(set(own) - set(mapping))
        extra = sorted(set(mapping) - set(own))
        if missing or extra:
            raise KeyError(f"state mismatch: missing={missing} extra={extra}")
        for name, target in own.items():
            arr = np.asarray(mapping[name], dtype=target.data.dtype)
            if arr.shape != target.data.shape:
                raise ValueError(
                    f"state {name}: shape {arr.shape} != expected {target.data.shape}"
                )
            target.data = arr


class ModuleList(list):
    """Plain list that Module traversal descends into."""


def he_normal(rng, shape, fan_in):
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(np.float32)


class Conv2d(Module):
    def __init__(self, rng, in_ch, out_ch, kernel, stride=1, pad=None, bias=False):
        super().__init__()
        self.stride = stride
        self.pad = kernel // 2 if pad is None else pad
        fan_in = in_ch * kernel * kernel
        self.weight = Parameter(he_normal(rng, (out_ch, in_ch, kernel, kernel), fan_in))
        self.bias = Parameter(np.zeros(out_ch, dtype=np.float32), decay=False) if bias else None

    def forward(self, x):
        return ops.conv2d(x, self.weight, self.bias, stride=self.stride, pad=self.pad)


class BatchNorm2d(Module):
    def __init__(self, ch, eps=1e-5, momentum=0.1):
        super().__init__()
        self.eps = eps
        self.momentum = momentum
        self.gamma = Parameter(np.ones(ch, dtype=np.float32), decay=False)
        self.beta = Parameter(np.zeros(ch, dtype=np.float32), decay=False)
        self.running_mean = Buffer(np.zeros(ch, dtype=np.float32))
        self.running_var = Buffer(np.ones(ch, dtype=np.float32))

    def forward(self, x):
        return ops.batch_norm2d(
            x,
            self.gamma,
            self.beta,
            running_mean=self.running_mean.data,
            running_var=self.running_var.data,
            eps=self.eps,
            momentum=self.momentum,
            training=self.training,
        )


_ACTS = {
    "mish": ops.mish,
    "leaky": lambda x: ops.leaky_relu(x, 0.1),
    "linear": lambda x: x,
}


class ConvBNAct(Module):
    """conv -> batch norm -> activation, the standard darknet cell."""

    def __init__(self, rng, in_ch, out_ch, kernel, stride=1, act="mish"):
        super().__init__()
        self.conv = Conv2d(rng, in_ch, out_ch, kernel, stride=stride, bias=False)
        self.bn = BatchNorm2d(out_ch)
        self.act = act

    def forward(self, x):
        return _ACTS[self.act](self.bn(self.conv(x)))


class Linear(Module):
    def __init__(self, rng, in_dim, out_dim):
        super().__init__()
        self.weight = Parameter(he_normal(rng, (in_dim, out_dim), in_dim))
        self.bias = Parameter(np.zeros(out_dim, dtype=np.float32), decay=False)

    def forward(self, x):
        return ops.matmul(x, self.weight, self.bias)


class DropBlock(Module):
    """Structured dropout; the trainer reseeds it per optimization step.

    block_size is clamped to the (odd) spatial extent so small maps, e.g.
    late stages at 32x32 input, stay valid.
    """

    def __init__(self, keep_prob=0.9, block_size=7):
        super().__init__()
        self.keep_prob = keep_prob
        self.block_size = block_size
        self.rng = np.random.default_rng(0)

    def reseed(self, seed_seq):
        self.rng = np.random.default_rng(seed_seq)

    def forward(self, x):
        if not self.training or self.keep_prob >= 1.0:
            return x
        smallest = min(x.shape[2], x.shape[3])
        block = min(self.block_size, smallest if smallest % 2 == 1 else smallest - 1)
        if block < 1:
            return x
        return ops.dropblock(x, self.keep_prob, block, self.training, self.rng)
