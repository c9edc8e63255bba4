"""Reverse-mode autodiff over numpy arrays.

Just the ops the model needs, nothing more: affine maps, GELU, layer
norm, masked softmax, 1-D convolution, an orthonormal DFT, and the
shape plumbing to wire them together. Tensors hold float32 or float64
data; gradients accumulate in the same dtype.

Hot elementwise/rowwise kernels dispatch through biformer3d.kernels
(compiled extension when available, numpy fallback otherwise).
"""

import numpy as np

from .. import kernels
from ..errors import ConfigError, NumericError

_DEBUG_CHECKS = False


def set_debug_checks(enabled: bool) -> None:
    """When on, every op output and gradient is checked for NaN/Inf."""
    global _DEBUG_CHECKS
    _DEBUG_CHECKS = bool(enabled)


def _check(arr, what):
    if _DEBUG_CHECKS and not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {what}")


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, _wrap(other, self))

    def __radd__(self, other):
        return add(_wrap(other, self), self)

    def __sub__(self, other):
        return sub(self, _wrap(other, self))

    def __rsub__(self, other):
        return sub(_wrap(other, self), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, _wrap(other, self))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _wrap(other, self))

    def backward(self) -> None:
        """Reverse-mode accumulation from a scalar loss."""
        if self.data.size != 1:
            raise ConfigError(f"backward needs a scalar, got shape {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise NumericError("loss is not finite")
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                node._backward = None  # free closure references


def _wrap(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.data.dtype))


def constant(data, dtype=None) -> Tensor:
    arr = np.asarray(data, dtype=dtype) if dtype is not None else np.asarray(data)
    return Tensor(arr)


def parameter(data) -> Tensor:
    return Tensor(np.asarray(data), requires_grad=True)


def _make(data, parents, backward) -> Tensor:
    _check(data, "op output")
    t = Tensor.__new__(Tensor)
    t.data = data
    t.grad = None
    t.requires_grad = any(p.requires_grad for p in parents)
    if t.requires_grad:
        t._parents = tuple(parents)
        t._backward = backward
    else:
        t._parents = ()
        t._backward = None
    return t


def _accum(t: Tensor, g) -> None:
    if not t.requires_grad:
        return
    _check(g, "gradient")
    if g.dtype != t.data.dtype:
        g = g.astype(t.data.dtype)
    # accumulation always rebinds (never mutates), so holding a view is safe
    t.grad = g if t.grad is None else t.grad + g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum g down to `shape` (inverse of numpy broadcasting)."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _contig(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a)


# -- arithmetic ---------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def bwd(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _make(out, (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.data - b.data

    def bwd(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(-g, b.data.shape))

    return _make(out, (a, b), bwd)


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: _accum(a, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data

    def bwd(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(out, (a, b), bwd)


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    return _make(a.data * np.asarray(s, dtype=a.data.dtype), (a,),
                 lambda g: _accum(a, g * np.asarray(s, dtype=g.dtype)))


def abs_(a: Tensor) -> Tensor:
    sign = np.sign(a.data)
    return _make(np.abs(a.data), (a,), lambda g: _accum(a, g * sign))


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is None:
            _accum(a, np.broadcast_to(g, a.data.shape).astype(a.data.dtype))
            return
        gg = g
        if not keepdims:
            gg = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(gg, a.data.shape).astype(a.data.dtype))

    return _make(np.asarray(out), (a,), bwd)


# -- shape plumbing -----------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    ad, bd = a.data, b.data
    if ad.ndim >= 2 and bd.ndim == 2:
        if ad.shape[-1] != bd.shape[0]:
            raise ConfigError(f"matmul {ad.shape} @ {bd.shape}")
        out = ad @ bd

        def bwd(g):
            _accum(a, g @ bd.T)
            a2 = ad.reshape(-1, ad.shape[-1])
            g2 = g.reshape(-1, g.shape[-1])
            _accum(b, a2.T @ g2)

        return _make(out, (a, b), bwd)
    if ad.ndim == bd.ndim and ad.ndim >= 3:
        if ad.shape[:-2] != bd.shape[:-2] or ad.shape[-1] != bd.shape[-2]:
            raise ConfigError(f"batched matmul {ad.shape} @ {bd.shape}")
        out = ad @ bd

        def bwd(g):
            _accum(a, g @ bd.swapaxes(-1, -2))
            _accum(b, ad.swapaxes(-1, -2) @ g)

        return _make(out, (a, b), bwd)
    raise ConfigError(f"unsupported matmul ranks {ad.ndim} @ {bd.ndim}")


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _make(np.transpose(a.data, axes), (a,),
                 lambda g: _accum(a, np.transpose(g, inv)))


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    orig = a.data.shape
    return _make(a.data.reshape(shape), (a,),
                 lambda g: _accum(a, g.reshape(orig)))


def concat(tensors, axis: int = -1) -> Tensor:
    datas = [t.data for t in tensors]
    if not datas:
        raise ConfigError("concat of zero tensors")
    try:
        out = np.concatenate(datas, axis=axis)
    except ValueError as e:
        raise ConfigError(f"concat shape mismatch: {e}") from e
    sizes = [d.shape[axis] for d in datas]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for t, s, e in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(s, e)
            _accum(t, g[tuple(idx)])

    return _make(out, tuple(tensors), bwd)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    n = a.data.shape[axis]
    if start < 0 or length < 1 or start + length > n:
        raise ConfigError(
            f"narrow [{start}, {start + length}) outside axis of size {n}"
        )
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    out = a.data[idx].copy()

    def bwd(g):
        gf = np.zeros_like(a.data)
        gf[idx] = g
        _accum(a, gf)

    return _make(out, (a,), bwd)


def gather_rows(a: Tensor, perm) -> Tensor:
    """out[..., i, :] = a[..., perm[i], :] for a permutation perm."""
    perm = np.asarray(perm, dtype=np.int64)
    n = a.data.shape[-2]
    if perm.shape != (n,) or not np.array_equal(np.sort(perm), np.arange(n)):
        raise ConfigError("gather_rows needs a permutation of the row axis")
    inv = np.argsort(perm)
    out = a.data[..., perm, :]

    def bwd(g):
        _accum(a, g[..., inv, :])

    return _make(out, (a,), bwd)


# -- neural ops ---------------------------------------------------------

def gelu(a: Tensor) -> Tensor:
    x = _contig(a.data).ravel()
    out = kernels.gelu_fwd(x).reshape(a.data.shape)

    def bwd(g):
        gx = kernels.gelu_bwd(x, _contig(g).ravel())
        _accum(a, gx.reshape(a.data.shape))

    return _make(out, (a,), bwd)


def layer_norm(a: Tensor, ln_scale: Tensor, ln_shift: Tensor,
               eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then affine by (scale, shift)."""
    d = a.data.shape[-1]
    if ln_scale.data.shape != (d,) or ln_shift.data.shape != (d,):
        raise ConfigError("layer_norm scale/shift must match last axis")
    x2 = _contig(a.data).reshape(-1, d)
    y, mean, rstd = kernels.layernorm_fwd(x2, ln_scale.data, ln_shift.data, eps)
    out = y.reshape(a.data.shape)

    def bwd(g):
        gx, gscale, gshift = kernels.layernorm_bwd(
            x2, ln_scale.data, mean, rstd, _contig(g).reshape(-1, d)
        )
        _accum(a, gx.reshape(a.data.shape))
        _accum(ln_scale, gscale)
        _accum(ln_shift, gshift)

    return _make(out, (a, ln_scale, ln_shift), bwd)


def masked_softmax(scores: Tensor, key_mask) -> Tensor:
    """Row-wise softmax over the last axis with masked keys excluded.

    key_mask is a {0,1} vector over the last axis (broadcastable);
    masked positions get an additive -1e9, which underflows to exactly
    zero probability. Gradients flow only through unmasked scores.
    """
    mask = np.asarray(key_mask)
    if not np.all(np.any(mask != 0, axis=-1)):
        raise ConfigError("masked_softmax: a row has every key masked")
    bias = np.where(mask != 0, 0.0, -1e9).astype(scores.data.dtype)
    n = scores.data.shape[-1]
    x2 = _contig(scores.data + bias).reshape(-1, n)
    p = kernels.softmax_fwd(x2)
    out = p.reshape(scores.data.shape)

    def bwd(g):
        gx = kernels.softmax_bwd(p, _contig(g).reshape(-1, n))
        _accum(scores, gx.reshape(scores.data.shape))

    return _make(out, (scores,), bwd)


def conv1d(x: Tensor, kernel: Tensor) -> Tensor:
    """Same-length conv of (C, N) channels with a shared odd-width kernel."""
    if x.data.ndim != 2:
        raise ConfigError(f"conv1d expects (channels, length), got {x.data.shape}")
    if kernel.data.ndim != 1 or kernel.data.shape[0] % 2 == 0:
        raise ConfigError(f"conv1d kernel must be 1-D odd, got {kernel.data.shape}")
    xd = _contig(x.data)
    kd = _contig(kernel.data)
    out = kernels.conv1d_fwd(xd, kd)

    def bwd(g):
        gx, gk = kernels.conv1d_bwd(xd, kd, _contig(g))
        _accum(x, gx)
        _accum(kernel, gk)

    return _make(out, (x, kernel), bwd)


def dft_ortho(x: Tensor) -> Tensor:
    """Orthonormal DFT along the last axis.

    Returns a real tensor of shape (..., 2, K): plane 0 is the real
    part, plane 1 the imaginary part. Parseval holds: the squared sum
    over both planes equals the squared sum of the input.
    """
    spec = np.fft.fft(x.data, axis=-1, norm="ortho")
    out = np.stack([spec.real, spec.imag], axis=-2).astype(x.data.dtype)

    def bwd(g):
        gc = g[..., 0, :] + 1j * g[..., 1, :]
        gx = np.fft.ifft(gc, axis=-1, norm="ortho").real
        _accum(x, gx.astype(x.data.dtype))

    return _make(out, (x,), bwd)
