#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallback.

Times the three hot kernels on training-shaped workloads plus one full
forward/backward step through the toy network under each backend.
"""

import time

import numpy as np

from evtrack import kernels
from evtrack.nn import autograd as ag
from evtrack.nn import network as net


def timeit(fn, repeats=20, warmup=3):
    for _ in range(warmup):
        fn()
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_backend(name):
    kernels.set_backend(name)
    rng = np.random.default_rng(0)
    out = {}

    xp = rng.random((32, 16, 26, 26), dtype=np.float32)
    out["im2col 32x16x26x26 k3s1"] = timeit(
        lambda: kernels.im2col(xp, 3, 3, 1, 1, 24, 24)
    )

    cols = np.ascontiguousarray(kernels.im2col(xp, 3, 3, 1, 1, 24, 24))
    buf = np.zeros_like(xp)
    out["col2im 32x16x26x26 k3s1"] = timeit(
        lambda: kernels.col2im_add(cols, buf, 3, 3, 1, 1, 24, 24)
    )

    n = 200_000
    t = np.sort(rng.integers(0, 1_000_000, n))
    x = rng.integers(0, 346, n)
    y = rng.integers(0, 260, n)
    img = np.zeros((260, 346))
    out[f"lnes_accumulate {n} events"] = timeit(
        lambda: kernels.lnes_accumulate(t, x, y, 1_000_000, 100_000, n, img)
    )

    cfg = net.toy_config()
    weights = net.init_weights(cfg, seed=0)
    xb = rng.random((32, 1, cfg.input_h, cfg.input_w), dtype=np.float32)
    offs = rng.random((32, 2)).astype(np.float32)

    def fwd_bwd():
        weights.zero_grads()
        main, _ = net.forward_batch(xb, offs, weights, cfg)
        ag.tsum(ag.mul(main, main)).backward()

    out["toy forward+backward batch 32"] = timeit(fwd_bwd, repeats=5, warmup=1)
    return out


def main():
    backends = kernels.available_backends()
    print(f"backends: {', '.join(backends)}")
    results = {b: bench_backend(b) for b in backends}
    kernels.set_backend("auto")
    names = list(next(iter(results.values())))
    width = max(len(n) for n in names)
    header = f"{'kernel':<{width}}  " + "  ".join(f"{b:>12}" for b in backends)
    if len(backends) > 1:
        header += f"  {'speedup':>8}"
    print(header)
    for n in names:
        row = f"{n:<{width}}  " + "  ".join(
            f"{results[b][n] * 1e3:>10.3f}ms" for b in backends
        )
        if len(backends) > 1:
            row += f"  {results['numpy'][n] / results['compiled'][n]:>7.2f}x"
        print(row)


if __name__ == "__main__":
    main()
