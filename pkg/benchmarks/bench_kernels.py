#!/usr/bin/env python3
"""Throughput comparison: compiled kernels vs the pure-numpy fallback.

Run:  python3 benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from macroplace.kernels import _py

try:
    from macroplace.kernels import _ext
except ImportError:
    _ext = None


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def build_cases(rng):
    n_nodes, n_nets = 1000, 1500
    x = rng.uniform(0, 1000, n_nodes)
    y = rng.uniform(0, 1000, n_nodes)
    pins, ptr = [], [0]
    for _ in range(n_nets):
        p = int(rng.integers(2, 6))
        pins.extend(rng.choice(n_nodes, size=p, replace=False).tolist())
        ptr.append(len(pins))
    ptr = np.array(ptr, dtype=np.int64)
    pins = np.array(pins, dtype=np.int64)
    q = np.ones(n_nets)

    m = n = 64
    k = 4000
    dr = rng.integers(0, m, k)
    dc = rng.integers(0, n, k)
    lr = rng.integers(0, m, k)
    lc = rng.integers(0, n, k)
    w = np.ones(k)

    nrect = 120
    rx = rng.uniform(0, 900, nrect)
    ry = rng.uniform(0, 900, nrect)
    rects = np.stack([rx, ry, rx + rng.uniform(10, 80, nrect),
                      ry + rng.uniform(10, 80, nrect)], axis=1)
    cw, ch = 1000.0 / n, 1000.0 / m
    soft = _py.density_add(rects, m, n, cw, ch)

    K = 900
    pos = rng.uniform(50, 950, size=(K, 2))
    hw = rng.uniform(2, 15, K)
    hh = rng.uniform(2, 15, K)
    movable = np.ones(K, dtype=np.uint8)
    movable[:50] = 0
    E = 2000
    ea = rng.integers(0, K, E)
    eb = rng.integers(0, K, E)
    ew = np.ones(E)
    theta = rng.uniform(0, 2 * np.pi, K)
    jitter = np.stack([np.cos(theta), np.sin(theta)], axis=1)

    return {
        "hpwl_sum": lambda impl: impl.hpwl_sum(x, y, ptr, pins, q),
        "route_usage": lambda impl: impl.route_usage(m, n, dr, dc, lr, lc, w),
        "density_add": lambda impl: impl.density_add(rects, m, n, cw, ch),
        "feasibility_mask": lambda impl: impl.feasibility_mask(
            m, n, cw, ch, 1000.0, 1000.0, 60.0, 45.0, soft, rects, 0.6
        ),
        "fd_run": lambda impl: impl.fd_run(
            pos, hw, hh, movable, ea, eb, ew, jitter, 50, 30.0, 4.0, 0.5, 1.0,
            15.0, 1e-6, 1000.0, 1000.0
        ),
    }


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    cases = build_cases(np.random.default_rng(0))
    print(f"{'kernel':<20}{'python':>12}{'compiled':>12}{'speedup':>10}")
    for name, fn in cases.items():
        t_py = timeit(lambda: fn(_py), args.repeats)
        if _ext is None:
            print(f"{name:<20}{t_py * 1e3:>10.2f}ms{'-':>12}{'-':>10}")
            continue
        t_ext = timeit(lambda: fn(_ext), args.repeats)
        print(f"{name:<20}{t_py * 1e3:>10.2f}ms{t_ext * 1e3:>10.2f}ms"
              f"{t_py / t_ext:>9.1f}x")


if __name__ == "__main__":
    main()
