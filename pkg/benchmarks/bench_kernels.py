"""Compare the compiled kernel extension against the numpy fallback.

Shapes mirror one training step of the default model on the desk corpus
(batch 8, 81 directions, D=128, 4 heads). Each kernel is timed as
median-of-repeats on both backends with a parity check on the outputs.

    python3 benchmarks/bench_kernels.py [--repeats N] [--dtype f32|f64]
"""

import argparse
import time

import numpy as np

from biformer3d.kernels import _numpy

try:
    from biformer3d.kernels import _core
except ImportError:
    _core = None

B, L, D, HEADS, DFF = 8, 81, 128, 4, 256
ROWS = B * L


def _median_time(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def _cases(dtype):
    rng = np.random.default_rng(0)

    def arr(*shape):
        return rng.standard_normal(shape).astype(dtype)

    x_act = arr(ROWS * DFF)
    gy_act = arr(ROWS * DFF)
    x_ln = arr(ROWS, D)
    scale = np.ones(D, dtype=dtype)
    shift = np.zeros(D, dtype=dtype)
    _, mean, rstd = _numpy.layernorm_fwd(x_ln, scale, shift, 1e-5)
    gy_ln = arr(ROWS, D)
    logits = arr(B * HEADS * L, L)
    probs = _numpy.softmax_fwd(logits)
    gy_sm = arr(B * HEADS * L, L)
    x_cv = arr(B * 2 * 64, 64)
    kern = arr(3)
    gy_cv = arr(B * 2 * 64, 64)
    p = arr(512 * 1024)
    g = arr(512 * 1024)
    m = np.zeros_like(p)
    v = np.zeros_like(p)

    def adamw_case(k):
        pp, mm, vv = p.copy(), m.copy(), v.copy()
        k.adamw_update(pp, g, mm, vv, 3, 3e-4, 0.9, 0.999, 1e-8, 0.01)
        return pp

    return [
        ("gelu_fwd", lambda k: k.gelu_fwd(x_act)),
        ("gelu_bwd", lambda k: k.gelu_bwd(x_act, gy_act)),
        ("layernorm_fwd", lambda k: k.layernorm_fwd(x_ln, scale, shift, 1e-5)),
        ("layernorm_bwd",
         lambda k: k.layernorm_bwd(x_ln, scale, mean, rstd, gy_ln)),
        ("softmax_fwd", lambda k: k.softmax_fwd(logits)),
        ("softmax_bwd", lambda k: k.softmax_bwd(probs, gy_sm)),
        ("conv1d_fwd", lambda k: k.conv1d_fwd(x_cv, kern)),
        ("conv1d_bwd", lambda k: k.conv1d_bwd(x_cv, kern, gy_cv)),
        ("adamw_update", adamw_case),
    ]


def _flatten(out):
    if isinstance(out, tuple):
        return np.concatenate([np.ravel(np.asarray(o)) for o in out])
    return np.ravel(np.asarray(out))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=30)
    ap.add_argument("--dtype", choices=("f32", "f64"), default="f32")
    args = ap.parse_args()
    dtype = np.float32 if args.dtype == "f32" else np.float64

    if _core is None:
        print("compiled extension unavailable; timing numpy backend only")
    header = f"{'kernel':<16}{'numpy ms':>10}{'compiled ms':>13}" \
             f"{'speedup':>9}{'max |diff|':>12}"
    print(header)
    print("-" * len(header))
    for name, call in _cases(dtype):
        t_np = _median_time(lambda: call(_numpy), args.repeats)
        if _core is None:
            print(f"{name:<16}{t_np * 1e3:>10.3f}{'-':>13}{'-':>9}{'-':>12}")
            continue
        t_c = _median_time(lambda: call(_core), args.repeats)
        diff = float(np.max(np.abs(
            _flatten(call(_numpy)) - _flatten(call(_core)))))
        print(f"{name:<16}{t_np * 1e3:>10.3f}{t_c * 1e3:>13.3f}"
              f"{t_np / t_c:>9.2f}{diff:>12.2e}")


if __name__ == "__main__":
    main()
