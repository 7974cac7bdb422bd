from .tensor import (
    DTYPE,
    Tensor,
    as_tensor,
    compute_dtype,
    double_precision,
    is_grad_enabled,
    matmul,
    no_grad,
)
from .ops import (
    avg_pool2d,
    concat,
    conv2d_3x3,
    elementwise,
    expand,
    logsumexp_rows,
    mse,
    normalize_rows,
    softmax_rows,
    take_rows,
    upsample_nearest,
)
from .nn import Conv2d, Embedding, Linear, Module
from .optim import Adam

__all__ = [
    "DTYPE",
    "Tensor",
    "as_tensor",
    "compute_dtype",
    "double_precision",
    "is_grad_enabled",
    "no_grad",
    "matmul",
    "elementwise",
    "softmax_rows",
    "logsumexp_rows",
    "normalize_rows",
    "concat",
    "take_rows",
    "expand",
    "conv2d_3x3",
    "avg_pool2d",
    "upsample_nearest",
    "mse",
    "Module",
    "Linear",
    "Conv2d",
    "Embedding",
    "Adam",
]
