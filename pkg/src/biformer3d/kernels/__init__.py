"""Kernel backend selection.

The compiled extension (`biformer3d.kernels._core`) is preferred when it
imported cleanly; `BIFORMER3D_PURE=1` forces the pure-numpy fallback.
Both backends share signatures and semantics; parity is covered in tests.

Call convention (identical across backends): gelu and adamw take flat 1-D
views; layer norm, softmax, and conv1d take 2-D row-contiguous arrays.
"""

import os

_force_pure = os.environ.get("BIFORMER3D_PURE", "") not in ("", "0")

if _force_pure:
    from . import _numpy as _impl
    BACKEND = "numpy"
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
        BACKEND = "compiled"
    except ImportError:
        from . import _numpy as _impl
        BACKEND = "numpy"

gelu_fwd = _impl.gelu_fwd
gelu_bwd = _impl.gelu_bwd
layernorm_fwd = _impl.layernorm_fwd
layernorm_bwd = _impl.layernorm_bwd
softmax_fwd = _impl.softmax_fwd
softmax_bwd = _impl.softmax_bwd
conv1d_fwd = _impl.conv1d_fwd
conv1d_bwd = _impl.conv1d_bwd
adamw_update = _impl.adamw_update

__all__ = [
    "BACKEND",
    "gelu_fwd", "gelu_bwd",
    "layernorm_fwd", "layernorm_bwd",
    "softmax_fwd", "softmax_bwd",
    "conv1d_fwd", "conv1d_bwd",
    "adamw_update",
]
