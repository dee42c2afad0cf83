"""Time the numpy fallback against the compiled kernels.

Run with ``python benchmarks/bench_kernels.py [--repeat N]``. Shapes match
the default 2-D model layers (batch 64, width 128) so the numbers reflect
the training loop, where per-call overhead dominates.
"""

import argparse
import timeit

import numpy as np

from goldgan.kernels import LEAKY_RELU, get_backend


def _cases(k, rng, batch=64, n_in=128, n_out=128):
    x = rng.standard_normal((batch, n_in))
    W = rng.standard_normal((n_out, n_in)) * 0.1
    b = np.zeros(n_out)
    z = np.empty((batch, n_out))
    a = np.empty((batch, n_out))
    ga = rng.standard_normal((batch, n_out))
    dW, db, dx = np.empty_like(W), np.empty_like(b), np.empty_like(x)
    p, g = rng.standard_normal(W.size), rng.standard_normal(W.size)
    m, v = np.zeros_like(p), np.zeros_like(p)
    u, vv = rng.standard_normal(n_out), np.empty(n_in)
    u /= np.linalg.norm(u)
    k.dense_forward(x, W, b, LEAKY_RELU, z, a)
    return {
        "dense_forward": lambda: k.dense_forward(x, W, b, LEAKY_RELU, z, a),
        "dense_backward": lambda: k.dense_backward(x, W, z, a, ga, LEAKY_RELU, False, dW, db, dx),
        "adam_update": lambda: k.adam_update(p, g, m, v, 1e-3, 0.5, 0.999, 1e-8, 1),
        "spectral_sigma": lambda: k.spectral_sigma(W, u, vv),
        "power_iteration_x5": lambda: k.power_iteration(W, u, vv, 5),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=2000)
    args = ap.parse_args()
    backends = {}
    for name in ("python", "cython"):
        try:
            backends[name] = get_backend(name)
        except ImportError:
            print(f"{name}: not built, skipped")
    timings = {}
    for name, k in backends.items():
        for case, fn in _cases(k, np.random.default_rng(0)).items():
            best = min(timeit.repeat(fn, number=args.repeat, repeat=3)) / args.repeat
            timings[(case, name)] = best * 1e6
    print(f"{'kernel':<20}" + "".join(f"{n + ' us':>14}" for n in backends) + f"{'speedup':>10}")
    for case in _cases(backends["python"], np.random.default_rng(0)):
        row = [timings[(case, n)] for n in backends]
        speed = f"{row[0] / row[1]:.2f}x" if len(row) == 2 else "-"
        print(f"{case:<20}" + "".join(f"{t:>14.2f}" for t in row) + f"{speed:>10}")


if __name__ == "__main__":
    main()
