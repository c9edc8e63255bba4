# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels. Signatures and semantics mirror _numpy exactly;
accumulations run in double regardless of the array dtype."""

import numpy as np

cimport numpy as cnp
from libc.math cimport erf, exp, sqrt

cnp.import_array()

ctypedef fused real:
    float
    double

DEF INV_SQRT2 = 0.7071067811865475
DEF INV_SQRT2PI = 0.3989422804014327


def gelu_fwd(real[::1] x):
    cdef Py_ssize_t i, n = x.shape[0]
    out_np = np.empty(n, dtype=np.asarray(x).dtype)
    cdef real[::1] out = out_np
    cdef double v
    for i in range(n):
        v = <double> x[i]
        out[i] = <real> (v * 0.5 * (1.0 + erf(v * INV_SQRT2)))
    return out_np


def gelu_bwd(real[::1] x, real[::1] gy):
    cdef Py_ssize_t i, n = x.shape[0]
    out_np = np.empty(n, dtype=np.asarray(x).dtype)
    cdef real[::1] out = out_np
    cdef double v, d
    for i in range(n):
        v = <double> x[i]
        d = 0.5 * (1.0 + erf(v * INV_SQRT2)) + v * exp(-0.5 * v * v) * INV_SQRT2PI
        out[i] = <real> (<double> gy[i] * d)
    return out_np


def layernorm_fwd(real[:, ::1] x, real[::1] scale, real[::1] shift, double eps):
    cdef Py_ssize_t r, j, rows = x.shape[0], d = x.shape[1]
    y_np = np.empty((rows, d), dtype=np.asarray(x).dtype)
    mean_np = np.empty(rows, dtype=np.float64)
    rstd_np = np.empty(rows, dtype=np.float64)
    cdef real[:, ::1] y = y_np
    cdef double[::1] mean = mean_np
    cdef double[::1] rstd = rstd_np
    cdef double s, sq, mu, var, rs, v
    for r in range(rows):
        s = 0.0
        sq = 0.0
        for j in range(d):
            v = <double> x[r, j]
            s += v
            sq += v * v
        mu = s / d
        var = sq / d - mu * mu
        if var < 0.0:
            var = 0.0
        rs = 1.0 / sqrt(var + eps)
        mean[r] = mu
        rstd[r] = rs
        for j in range(d):
            y[r, j] = <real> (((<double> x[r, j]) - mu) * rs
                              * (<double> scale[j]) + (<double> shift[j]))
    return y_np, mean_np, rstd_np


def layernorm_bwd(real[:, ::1] x, real[::1] scale, double[::1] mean,
                  double[::1] rstd, real[:, ::1] gy):
    cdef Py_ssize_t r, j, rows = x.shape[0], d = x.shape[1]
    dt = np.asarray(x).dtype
    gx_np = np.empty((rows, d), dtype=dt)
    gscale_np = np.zeros(d, dtype=np.float64)
    gshift_np = np.zeros(d, dtype=np.float64)
    cdef real[:, ::1] gx = gx_np
    cdef double[::1] gscale = gscale_np
    cdef double[::1] gshift = gshift_np
    cdef double mu, rs, m1, m2, xh, gh
    for r in range(rows):
        mu = mean[r]
        rs = rstd[r]
        m1 = 0.0
        m2 = 0.0
        for j in range(d):
            xh = ((<double> x[r, j]) - mu) * rs
            gh = (<double> gy[r, j]) * (<double> scale[j])
            m1 += gh
            m2 += gh * xh
            gscale[j] += (<double> gy[r, j]) * xh
            gshift[j] += <double> gy[r, j]
        m1 /= d
        m2 /= d
        for j in range(d):
            xh = ((<double> x[r, j]) - mu) * rs
            gh = (<double> gy[r, j]) * (<double> scale[j])
            gx[r, j] = <real> (rs * (gh - m1 - xh * m2))
    return gx_np, gscale_np.astype(dt, copy=False), gshift_np.astype(dt, copy=False)


def softmax_fwd(real[:, ::1] x):
    cdef Py_ssize_t r, j, rows = x.shape[0], n = x.shape[1]
    out_np = np.empty((rows, n), dtype=np.asarray(x).dtype)
    cdef real[:, ::1] out = out_np
    cdef double mx, s, e
    for r in range(rows):
        mx = <double> x[r, 0]
        for j in range(1, n):
            if (<double> x[r, j]) > mx:
                mx = <double> x[r, j]
        s = 0.0
        for j in range(n):
            e = exp((<double> x[r, j]) - mx)
            out[r, j] = <real> e
            s += e
        for j in range(n):
            out[r, j] = <real> ((<double> out[r, j]) / s)
    return out_np


def softmax_bwd(real[:, ::1] p, real[:, ::1] gy):
    cdef Py_ssize_t r, j, rows = p.shape[0], n = p.shape[1]
    out_np = np.empty((rows, n), dtype=np.asarray(p).dtype)
    cdef real[:, ::1] out = out_np
    cdef double dot
    for r in range(rows):
        dot = 0.0
        for j in range(n):
            dot += (<double> p[r, j]) * (<double> gy[r, j])
        for j in range(n):
            out[r, j] = <real> ((<double> p[r, j]) * ((<double> gy[r, j]) - dot))
    return out_np


def conv1d_fwd(real[:, ::1] x, real[::1] k):
    cdef Py_ssize_t c, i, t, cs = x.shape[0], n = x.shape[1], w = k.shape[0]
    cdef Py_ssize_t pad = w // 2, src
    out_np = np.zeros((cs, n), dtype=np.asarray(x).dtype)
    cdef real[:, ::1] out = out_np
    cdef double acc
    for c in range(cs):
        for i in range(n):
            acc = 0.0
            for t in range(w):
                src = i + t - pad
                if 0 <= src < n:
                    acc += (<double> k[t]) * (<double> x[c, src])
            out[c, i] = <real> acc
    return out_np


def conv1d_bwd(real[:, ::1] x, real[::1] k, real[:, ::1] gy):
    cdef Py_ssize_t c, j, t, cs = x.shape[0], n = x.shape[1], w = k.shape[0]
    cdef Py_ssize_t pad = w // 2, src
    dt = np.asarray(x).dtype
    gx_np = np.zeros((cs, n), dtype=dt)
    gk_np = np.zeros(w, dtype=np.float64)
    cdef real[:, ::1] gx = gx_np
    cdef double[::1] gk = gk_np
    cdef double acc
    for c in range(cs):
        for j in range(n):
            acc = 0.0
            for t in range(w):
                src = j + pad - t
                if 0 <= src < n:
                    acc += (<double> k[t]) * (<double> gy[c, src])
            gx[c, j] = <real> acc
    for t in range(w):
        acc = 0.0
        for c in range(cs):
            for j in range(n):
                src = j + t - pad
                if 0 <= src < n:
                    acc += (<double> gy[c, j]) * (<double> x[c, src])
        gk[t] = acc
    return gx_np, gk_np.astype(dt, copy=False)


def adamw_update(real[::1] p, real[::1] g, real[::1] m, real[::1] v,
                 long t, double lr, double beta1, double beta2,
                 double eps, double weight_decay):
    cdef Py_ssize_t i, n = p.shape[0]
    cdef double bc1 = 1.0 - beta1 ** t
    cdef double bc2 = 1.0 - beta2 ** t
    cdef double mi, vi, gi
    for i in range(n):
        gi = <double> g[i]
        if weight_decay != 0.0:
            p[i] = <real> ((<double> p[i]) * (1.0 - lr * weight_decay))
        mi = beta1 * (<double> m[i]) + (1.0 - beta1) * gi
        vi = beta2 * (<double> v[i]) + (1.0 - beta2) * gi * gi
        m[i] = <real> mi
        v[i] = <real> vi
        p[i] = <real> ((<double> p[i]) - lr * (mi / bc1) / (sqrt(vi / bc2) + eps))
