"""MRHAM-YOLOv4-Slim: anchor-based detection with residual hybrid attention.

Everything runs on a small taped reverse-mode autodiff engine (float32
forward, float64 gradient checks) with hot kernels in an optional compiled
core. See the CLI (`mryolo --help`) for the end-to-end workflows.
"""

from .autograd import ShapeError, Tape, Tensor, backward
from . import ops  # noqa: F401  (attaches Tensor operator sugar)

__version__ = "0.1.0"

__all__ = ["ShapeError", "Tape", "Tensor", "backward", "ops"]
