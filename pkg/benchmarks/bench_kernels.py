"""Benchmark the numba kernels against the pure-numpy fallback.

Run: python3 benchmarks/bench_kernels.py [--repeats N]

Times every hot kernel at the canonical online-selection sizes (candidate
batch 320, d=10, C=4) and at a larger shape, and reports the per-call
speedup of the compiled path. The numba kernels are compiled (and disk-
cached) before timing so JIT cost is excluded.
"""

import argparse
import time

import numpy as np

from reducr.kernels import implementations
from reducr.numerics import make_rng


def make_args(rng, name, n, d, C, h=32):
    X = rng.standard_normal((n, d))
    y = rng.integers(0, C, size=n)
    wts = rng.uniform(0.5, 1.5, size=n)
    W = rng.standard_normal((d, C))
    b = rng.standard_normal(C)
    W1 = rng.standard_normal((d, h))
    b1 = rng.standard_normal(h)
    W2 = rng.standard_normal((h, C))
    b2 = rng.standard_normal(C)
    tl = rng.uniform(0, 3, size=n)
    el = rng.uniform(0, 3, size=(C, n))
    weights = rng.dirichlet(np.ones(C))
    hold = rng.uniform(0, 2, size=C)
    preds = rng.integers(0, C, size=n)
    table = {
        "linear_ce": (X, W, b, y),
        "linear_grad": (X, W, b, y, wts),
        "mlp_ce": (X, W1, b1, W2, b2, y),
        "mlp_grad": (X, W1, b1, W2, b2, y, wts),
        "weighted_excess_scores": (tl, el, weights, True),
        "min_payoff_scores": (tl, el, hold),
        "class_sums": (tl, preds, y, C),
    }
    return table[name]


def time_call(fn, args, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=200)
    opts = parser.parse_args()

    impls = implementations()
    if impls["numba"] is None:
        print("numba is not importable; nothing to compare")
        return

    rng = make_rng(0)
    shapes = [("canonical 320x10 C=4", 320, 10, 4),
              ("large 4096x64 C=16", 4096, 64, 16)]
    print(f"{'kernel':<24} {'shape':<22} {'numpy':>10} {'numba':>10} {'speedup':>8}")
    print("-" * 78)
    for label, n, d, C in shapes:
        for name in impls["numpy"]:
            args = make_args(rng, name, n, d, C)
            impls["numba"][name](*args)  # compile before timing
            t_np = time_call(impls["numpy"][name], args, opts.repeats)
            t_nb = time_call(impls["numba"][name], args, opts.repeats)
            print(
                f"{name:<24} {label:<22} {t_np * 1e6:>8.1f}us {t_nb * 1e6:>8.1f}us"
                f" {t_np / t_nb:>7.2f}x"
            )


if __name__ == "__main__":
    main()
