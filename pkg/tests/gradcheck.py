"""Central finite differences over a flat parameter vector."""

import numpy as np

FD_STEP = 1e-5


def numeric_grad(f, params, step=FD_STEP):
    """Gradient of scalar ``f()`` w.r.t. ``params`` (perturbed in place)."""
    g = np.zeros_like(params)
    for i in range(params.size):
        old = params[i]
        params[i] = old + step
        hi = f()
        params[i] = old - step
        lo = f()
        params[i] = old
        g[i] = (hi - lo) / (2 * step)
    return g


def rel_error(analytic, numeric, floor=1e-6):
    """Worst elementwise |a - n| / max(|a|, |n|, floor)."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0
