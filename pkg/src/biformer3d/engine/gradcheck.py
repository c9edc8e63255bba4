"""Finite-difference gradient verification."""

import numpy as np


def check_gradients(build_loss, params, h: float = 1e-5,
                    rtol: float = 1e-4, atol: float = 1e-7,
                    max_per_param: int = 0):
    """Compare reverse-mode gradients against central differences.

    build_loss() must construct a fresh scalar loss Tensor from the
    current contents of `params` (an ordered name -> Tensor mapping with
    requires_grad=True). Every scalar entry of every parameter is
    perturbed unless max_per_param > 0 caps the count per parameter.

    An entry passes when |analytic - numeric| <= atol or the relative
    error against max(|analytic|, |numeric|) is <= rtol. Returns a dict
    with max_rel, n_checked, and a list of failures.
    """
    loss = build_loss()
    for t in params.values():
        t.grad = None
    loss.backward()
    analytic = {
        n: (np.zeros_like(t.data) if t.grad is None else t.grad.copy())
        for n, t in params.items()
    }

    failures = []
    max_rel = 0.0
    n_checked = 0
    for name, t in params.items():
        flat = t.data.ravel()
        idxs = range(flat.size)
        if 0 < max_per_param < flat.size:
            idxs = np.linspace(0, flat.size - 1, max_per_param).astype(int)
        for i in idxs:
            keep = flat[i]
            flat[i] = keep + h
            up = build_loss().item()
            flat[i] = keep - h
            down = build_loss().item()
            flat[i] = keep
            numeric = (up - down) / (2.0 * h)
            a = float(analytic[name].ravel()[i])
            err = abs(a - numeric)
            denom = max(abs(a), abs(numeric))
            rel = err / denom if denom > 0 else 0.0
            n_checked += 1
            if err > atol and rel > rtol:
                failures.append((name, int(i), a, numeric, rel))
            if denom > 0 and err > atol:
                max_rel = max(max_rel, rel)
    return {"max_rel": max_rel, "n_checked": n_checked, "failures": failures}
