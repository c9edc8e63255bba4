from .tensor import (
    Tensor,
    abs_,
    add,
    concat,
    constant,
    conv1d,
    dft_ortho,
    gather_rows,
    gelu,
    layer_norm,
    masked_softmax,
    matmul,
    mul,
    narrow,
    neg,
    parameter,
    reshape,
    scale,
    set_debug_checks,
    sub,
    sum_,
    transpose,
)
from .optim import AdamW
from .checkpoint import CHECKPOINT_MAGIC, load_checkpoint, save_checkpoint
from .gradcheck import check_gradients

__all__ = [
    "Tensor", "constant", "parameter", "set_debug_checks",
    "add", "sub", "mul", "neg", "scale", "matmul", "transpose", "reshape",
    "concat", "narrow", "gather_rows", "sum_", "abs_", "gelu", "layer_norm",
    "masked_softmax", "conv1d", "dft_ortho",
    "AdamW", "check_gradients",
    "CHECKPOINT_MAGIC", "save_checkpoint", "load_checkpoint",
]
