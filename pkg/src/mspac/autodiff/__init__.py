from . import mspd, ops
from .gradcheck import GradCheckError, GradReport, finite_diff_check
from .ops import ShapeError
from .tensor import (
    Tensor,
    as_tensor,
    backward,
    default_dtype,
    float64_mode,
    no_grad,
    parameter,
    zero_grads,
)

__all__ = [
    "GradCheckError",
    "GradReport",
    "ShapeError",
    "Tensor",
    "as_tensor",
    "backward",
    "default_dtype",
    "finite_diff_check",
    "float64_mode",
    "mspd",
    "no_grad",
    "ops",
    "parameter",
    "zero_grads",
]
