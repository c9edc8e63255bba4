"""Pure-numpy kernel implementations.

Reference semantics for the compiled extension; also the fallback backend
when the extension is unavailable or BIFORMER3D_PURE=1. All functions
take and return contiguous arrays and preserve dtype (float32/float64).
"""

import numpy as np
from scipy.special import erf

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu_fwd(x):
    """x * Phi(x), exact erf form."""
    xd = x.astype(np.float64, copy=False)
    y = xd * 0.5 * (1.0 + erf(xd * _INV_SQRT2))
    return y.astype(x.dtype, copy=False)


def gelu_bwd(x, gy):
    """d/dx [x*Phi(x)] = Phi(x) + x*phi(x)."""
    xd = x.astype(np.float64, copy=False)
    phi = np.exp(-0.5 * xd * xd) * _INV_SQRT2PI
    d = 0.5 * (1.0 + erf(xd * _INV_SQRT2)) + xd * phi
    return (gy.astype(np.float64, copy=False) * d).astype(x.dtype, copy=False)


def layernorm_fwd(x, scale, shift, eps):
    """Row-wise normalize (R, D) with variance floor eps, then affine.

    Returns (y, mean, rstd); mean/rstd are float64 caches for backward.
    """
    mean = x.mean(axis=1, dtype=np.float64)
    var = (x.astype(np.float64, copy=False) ** 2).mean(axis=1) - mean * mean
    var = np.maximum(var, 0.0)  # guards tiny negative round-off
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean[:, None]) * rstd[:, None]
    y = xhat * scale[None, :] + shift[None, :]
    return y.astype(x.dtype, copy=False), mean, rstd


def layernorm_bwd(x, scale, mean, rstd, gy):
    xhat = (x - mean[:, None]) * rstd[:, None]
    gxhat = gy * scale[None, :]
    d = x.shape[1]
    m1 = gxhat.mean(axis=1, keepdims=True)
    m2 = (gxhat * xhat).mean(axis=1, keepdims=True)
    gx = rstd[:, None] * (gxhat - m1 - xhat * m2)
    gscale = (gy * xhat).sum(axis=0)
    gshift = gy.sum(axis=0)
    return (
        gx.astype(x.dtype, copy=False),
        gscale.astype(scale.dtype, copy=False),
        gshift.astype(scale.dtype, copy=False),
    )


def softmax_fwd(x):
    """Row-wise softmax of (R, N); large negative entries underflow to 0."""
    z = x - x.max(axis=1, keepdims=True)
    e = np.exp(z)
    return (e / e.sum(axis=1, keepdims=True)).astype(x.dtype, copy=False)


def softmax_bwd(p, gy):
    dot = (p * gy).sum(axis=1, keepdims=True)
    return (p * (gy - dot)).astype(p.dtype, copy=False)


def conv1d_fwd(x, k):
    """Same-length 1-D convolution of each channel of (C, N) with a
    shared kernel (W,), zero padding, W odd."""
    c, n = x.shape
    w = k.shape[0]
    pad = w // 2
    xp = np.zeros((c, n + 2 * pad), dtype=x.dtype)
    xp[:, pad : pad + n] = x
    y = np.zeros_like(x)
    for t in range(w):
        y += k[t] * xp[:, t : t + n]
    return y


def conv1d_bwd(x, k, gy):
    c, n = x.shape
    w = k.shape[0]
    pad = w // 2
    xp = np.zeros((c, n + 2 * pad), dtype=x.dtype)
    xp[:, pad : pad + n] = x
    gp = np.zeros((c, n + 2 * pad), dtype=x.dtype)
    gp[:, pad : pad + n] = gy
    gx = np.zeros_like(x)
    gk = np.zeros_like(k)
    for t in range(w):
        gx += k[t] * gp[:, 2 * pad - t : 2 * pad - t + n]
        gk[t] = np.sum(gy * xp[:, t : t + n], dtype=np.float64)
    return gx, gk


def adamw_update(p, g, m, v, t, lr, beta1, beta2, eps, weight_decay):
    """One AdamW step in place on flat views p, m, v.

    Decoupled decay first (p *= 1 - lr*wd), then the bias-corrected
    adaptive step. t is the 1-based step count.
    """
    if weight_decay != 0.0:
        p *= 1.0 - lr * weight_decay
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    denom = np.sqrt(v / bc2) + eps
    p -= lr * (m / bc1) / denom
