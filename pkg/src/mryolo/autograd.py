"""Dense float tensors with taped reverse-mode differentiation.

A `Tape` records every differentiable operation executed inside its context,
in execution order. `backward(loss)` seeds the loss adjoint and replays the
records in reverse; because execution order is a topological order, each
record runs exactly once and sees fully-accumulated output gradients.

Tensors hold float32 data by default; the gradient-check harness runs the
same ops in float64. Outside a Tape context nothing is recorded, which is
the fast inference path.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Operand shapes incompatible with the requested operation."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "tape")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self.tape = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def numpy(self):
        return self.data

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{flag})"

    # operator sugar is attached by ops.py at import time


class Tape:
    """Execution-ordered record of differentiable ops."""

    current: "Tape | None" = None

    def __init__(self):
        self._records = []

    def __enter__(self):
        self._outer = Tape.current
        Tape.current = self
        return self

    def __exit__(self, *exc):
        Tape.current = self._outer
        return False

    def __len__(self):
        return len(self._records)

    def record(self, out, backward_fn):
        self._records.append((out, backward_fn))

    def clear(self):
        self._records.clear()


def accumulate(t: Tensor, g):
    """Add an adjoint contribution to t.grad (lazily allocated)."""
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def register(out: Tensor, inputs, backward_fn) -> Tensor:
    """Mark `out` differentiable and tape its backward closure, if recording."""
    tape = Tape.current
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.tape = tape
        tape.record(out, backward_fn)
    return out


def backward(loss: Tensor):
    """Accumulate d(loss)/d(t) into t.grad for every taped tensor; clears the tape."""
    if loss.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = loss.tape
    if tape is None or not tape._records:
        raise RuntimeError("backward called on a tensor with no taped history")
    loss.grad = np.ones_like(loss.data)
    for out, fn in reversed(tape._records):
        if out.grad is not None:
            fn(out.grad)
    tape.clear()
