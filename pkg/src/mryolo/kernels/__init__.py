"""Kernel backend selection.

The compiled extension is preferred when importable; the numpy fallback is
always available. `MRYOLO_KERNELS=numpy|native` forces a backend at import
time, and `use_backend()` switches at runtime (mainly for benchmarks).
"""

import os

from . import pyref

_BACKENDS = {"numpy": pyref}

try:
    from . import _native

    _BACKENDS["native"] = _native
except ImportError:
    _native = None

_forced = os.environ.get("MRYOLO_KERNELS")
if _forced:
    if _forced not in _BACKENDS:
        raise ImportError(
            f"MRYOLO_KERNELS={_forced!r} not available (choices: {sorted(_BACKENDS)})"
        )
    _impl = _BACKENDS[_forced]
else:
    _impl = _BACKENDS.get("native", pyref)


def use_backend(name):
    """Switch the active kernel backend ('numpy' or 'native')."""
    global _impl
    if name not in _BACKENDS:
        raise ValueError(f"unknown kernel backend {name!r} (choices: {sorted(_BACKENDS)})")
    _impl = _BACKENDS[name]


def current_backend():
    return _impl.NAME


def available_backends():
    return sorted(_BACKENDS)


def conv_out_size(size, k, stride, pad):
    return (size + 2 * pad - k) // stride + 1


def im2col(x, kh, kw, stride, pad):
    return _impl.im2col(x, kh, kw, stride, pad)


def col2im(cols, shape, kh, kw, stride, pad):
    return _impl.col2im(cols, shape, kh, kw, stride, pad)


def conv1out_forward(x, w, stride, pad):
    return _impl.conv1out_forward(x, w, stride, pad)


def conv1out_backward_input(g, w, shape, stride, pad):
    return _impl.conv1out_backward_input(g, w, shape, stride, pad)


def conv1out_backward_weight(g, x, kh, kw, stride, pad):
    return _impl.conv1out_backward_weight(g, x, kh, kw, stride, pad)


def maxpool_forward(x, k, stride, pad):
    return _impl.maxpool_forward(x, k, stride, pad)


def maxpool_backward(gout, idx, shape, k, stride, pad):
    return _impl.maxpool_backward(gout, idx, shape, k, stride, pad)
