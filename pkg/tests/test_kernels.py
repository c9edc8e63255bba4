"""Backend parity: the compiled extension must agree with the numpy
reference on every kernel, both precisions. Runs against whichever
backend import selected plus the reference module directly."""

import numpy as np
import pytest
from scipy.special import erf

from biformer3d import kernels
from biformer3d.kernels import _numpy as ref

try:
    from biformer3d.kernels import _core as core

    HAVE_CORE = True
except ImportError:
    HAVE_CORE = False

needs_core = pytest.mark.skipif(not HAVE_CORE, reason="extension not built")
DTYPES = (np.float32, np.float64)


def _tol(dt):
    return dict(rtol=2e-6, atol=2e-6) if dt == np.float32 else dict(rtol=1e-12, atol=1e-12)


def test_backend_selected():
    assert kernels.BACKEND in ("compiled", "numpy")


def test_gelu_values():
    x = np.array([0.0, 1.0, -1.0, 3.0], dtype=np.float64)
    y = kernels.gelu_fwd(x)
    expect = x * 0.5 * (1 + erf(x / np.sqrt(2)))
    np.testing.assert_allclose(y, expect, rtol=1e-12)
    assert y[0] == 0.0
    # derivative at 0 is exactly 1/2
    g = kernels.gelu_bwd(np.zeros(1), np.ones(1))
    assert g[0] == pytest.approx(0.5, abs=1e-15)


def test_gelu_asymptotes():
    x = np.array([-20.0, 20.0])
    y = kernels.gelu_fwd(x)
    assert y[0] == pytest.approx(0.0, abs=1e-12)
    assert y[1] == pytest.approx(20.0, rel=1e-12)


@needs_core
@pytest.mark.parametrize("dt", DTYPES)
def test_gelu_parity(dt):
    rng = np.random.default_rng(0)
    x = rng.normal(size=257).astype(dt) * 3
    gy = rng.normal(size=257).astype(dt)
    np.testing.assert_allclose(core.gelu_fwd(x), ref.gelu_fwd(x), **_tol(dt))
    np.testing.assert_allclose(core.gelu_bwd(x, gy), ref.gelu_bwd(x, gy), **_tol(dt))


def test_layernorm_normalizes():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(5, 16)).astype(np.float64) * 4 + 2
    y, mean, rstd = kernels.layernorm_fwd(x, np.ones(16), np.zeros(16), 1e-5)
    np.testing.assert_allclose(y.mean(axis=1), 0, atol=1e-12)
    np.testing.assert_allclose(y.std(axis=1), 1, atol=1e-3)  # eps skews slightly
    assert mean.dtype == np.float64 and rstd.dtype == np.float64


@needs_core
@pytest.mark.parametrize("dt", DTYPES)
def test_layernorm_parity(dt):
    rng = np.random.default_rng(2)
    x = np.ascontiguousarray(rng.normal(size=(7, 33)).astype(dt))
    scale = rng.normal(size=33).astype(dt)
    shift = rng.normal(size=33).astype(dt)
    gy = rng.normal(size=(7, 33)).astype(dt)
    y1, m1, r1 = core.layernorm_fwd(x, scale, shift, 1e-5)
    y2, m2, r2 = ref.layernorm_fwd(x, scale, shift, 1e-5)
    np.testing.assert_allclose(y1, y2, **_tol(dt))
    np.testing.assert_allclose(m1, m2, rtol=1e-10)
    np.testing.assert_allclose(r1, r2, rtol=1e-6)
    g1 = core.layernorm_bwd(x, scale, m1, r1, gy)
    g2 = ref.layernorm_bwd(x, scale, m2, r2, gy)
    for a, b in zip(g1, g2):
        np.testing.assert_allclose(a, b, **_tol(dt))


def test_softmax_rows_and_underflow():
    x = np.array([[0.0, 0.0, -1e9], [5.0, 5.0, 5.0]], dtype=np.float32)
    p = kernels.softmax_fwd(x)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, rtol=1e-6)
    assert p[0, 2] == 0.0  # -1e9 underflows to an exact zero
    np.testing.assert_allclose(p[0, :2], 0.5, rtol=1e-6)
    np.testing.assert_allclose(p[1], 1 / 3, rtol=1e-6)


@needs_core
@pytest.mark.parametrize("dt", DTYPES)
def test_softmax_parity(dt):
    rng = np.random.default_rng(3)
    x = np.ascontiguousarray(rng.normal(size=(9, 21)).astype(dt) * 5)
    p1, p2 = core.softmax_fwd(x), ref.softmax_fwd(x)
    np.testing.assert_allclose(p1, p2, **_tol(dt))
    gy = rng.normal(size=(9, 21)).astype(dt)
    np.testing.assert_allclose(core.softmax_bwd(p1, gy), ref.softmax_bwd(p2, gy),
                               **_tol(dt))


def test_conv1d_identity_and_shift():
    x = np.arange(12, dtype=np.float64).reshape(2, 6)
    ident = np.array([0.0, 1.0, 0.0])
    np.testing.assert_array_equal(kernels.conv1d_fwd(x, ident), x)
    # kernel [1,0,0] with pad 1 shifts right... verify against np.convolve
    k = np.array([0.25, 0.5, 0.25])
    y = kernels.conv1d_fwd(x, k)
    for c in range(2):
        np.testing.assert_allclose(y[c], np.convolve(x[c], k[::-1], mode="same"))


def test_conv1d_hand_case():
    # three-tap averaging of [1, 2, 3] with zero padding
    x = np.array([[1.0, 2.0, 3.0]])
    k = np.array([1 / 3, 1 / 3, 1 / 3])
    y = kernels.conv1d_fwd(x, k)
    np.testing.assert_allclose(y[0], [1.0, 2.0, 5 / 3])


def test_conv1d_grad_matches_fd():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(3, 10))
    k = rng.normal(size=5)
    gy = rng.normal(size=(3, 10))
    gx, gk = kernels.conv1d_bwd(x, k, gy)
    h = 1e-6
    for t in range(5):
        kp, km = k.copy(), k.copy()
        kp[t] += h
        km[t] -= h
        fd = np.sum((kernels.conv1d_fwd(x, kp) - kernels.conv1d_fwd(x, km)) * gy) / (2 * h)
        assert gk[t] == pytest.approx(fd, rel=1e-6, abs=1e-8)
    ij = [(0, 0), (1, 5), (2, 9)]
    for i, j in ij:
        xp, xm = x.copy(), x.copy()
        xp[i, j] += h
        xm[i, j] -= h
        fd = np.sum((kernels.conv1d_fwd(xp, k) - kernels.conv1d_fwd(xm, k)) * gy) / (2 * h)
        assert gx[i, j] == pytest.approx(fd, rel=1e-6, abs=1e-8)


@needs_core
@pytest.mark.parametrize("dt", DTYPES)
def test_conv1d_parity(dt):
    rng = np.random.default_rng(5)
    x = np.ascontiguousarray(rng.normal(size=(6, 40)).astype(dt))
    k = rng.normal(size=7).astype(dt)
    gy = rng.normal(size=(6, 40)).astype(dt)
    np.testing.assert_allclose(core.conv1d_fwd(x, k), ref.conv1d_fwd(x, k), **_tol(dt))
    g1x, g1k = core.conv1d_bwd(x, k, gy)
    g2x, g2k = ref.conv1d_bwd(x, k, gy)
    np.testing.assert_allclose(g1x, g2x, **_tol(dt))
    np.testing.assert_allclose(g1k, g2k, rtol=1e-5 if dt == np.float32 else 1e-12)


def test_adamw_single_step_oracle():
    # one step from zero moments: m=(1-b1)g, v=(1-b2)g^2; after bias
    # correction the update is exactly -lr * g/(|g|+eps) for wd=0
    p = np.array([1.0, -2.0])
    g = np.array([0.5, -3.0])
    m = np.zeros(2)
    v = np.zeros(2)
    kernels.adamw_update(p, g, m, v, 1, 0.1, 0.9, 0.999, 1e-8, 0.0)
    expect = np.array([1.0, -2.0]) - 0.1 * g / (np.abs(g) + 1e-8)
    np.testing.assert_allclose(p, expect, rtol=1e-12)


def test_adamw_lr_zero_is_noop():
    rng = np.random.default_rng(6)
    p = rng.normal(size=17)
    g = rng.normal(size=17)
    snap = p.copy()
    m = np.zeros(17)
    v = np.zeros(17)
    for t in range(1, 6):
        kernels.adamw_update(p, g, m, v, t, 0.0, 0.9, 0.999, 1e-8, 0.01)
    np.testing.assert_array_equal(p, snap)


def test_adamw_decay_applies_before_step():
    p = np.array([10.0])
    g = np.array([0.0])
    m = np.zeros(1)
    v = np.zeros(1)
    kernels.adamw_update(p, g, m, v, 1, 0.1, 0.9, 0.999, 1e-8, 0.5)
    # zero gradient: only the decay acts, p *= 1 - 0.1*0.5
    assert p[0] == pytest.approx(9.5, rel=1e-15)


@needs_core
@pytest.mark.parametrize("dt", DTYPES)
def test_adamw_parity(dt):
    rng = np.random.default_rng(7)
    p1 = rng.normal(size=100).astype(dt)
    p2 = p1.copy()
    m1 = np.zeros(100, dtype=dt)
    m2 = m1.copy()
    v1 = np.zeros(100, dtype=dt)
    v2 = v1.copy()
    for t in range(1, 8):
        g = rng.normal(size=100).astype(dt)
        core.adamw_update(p1, g, m1, v1, t, 3e-4, 0.9, 0.999, 1e-8, 0.01)
        ref.adamw_update(p2, g, m2, v2, t, 3e-4, 0.9, 0.999, 1e-8, 0.01)
    np.testing.assert_allclose(p1, p2, **_tol(dt))
    np.testing.assert_allclose(v1, v2, **_tol(dt))


def test_pure_env_forces_numpy_backend():
    import subprocess
    import sys

    out = subprocess.run(
        [sys.executable, "-c",
         "import biformer3d.kernels as k; print(k.BACKEND)"],
        env={"BIFORMER3D_PURE": "1", "PATH": "/usr/bin:/bin"},
        capture_output=True, text=True,
    )
    assert out.stdout.strip() == "numpy"
