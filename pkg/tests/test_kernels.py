"""Compiled vs pure-numpy kernel parity on random inputs."""

import numpy as np
import pytest

from macroplace.kernels import _py

try:
    from macroplace.kernels import _ext
except ImportError:
    _ext = None

needs_ext = pytest.mark.skipif(_ext is None, reason="compiled extension not built")


def _random_csr(rng, n_nodes, n_nets):
    pins = []
    ptr = [0]
    for _ in range(n_nets):
        p = int(rng.integers(2, 6))
        pins.extend(rng.choice(n_nodes, size=min(p, n_nodes), replace=False).tolist())
        ptr.append(len(pins))
    return np.array(ptr, dtype=np.int64), np.array(pins, dtype=np.int64)


@needs_ext
def test_hpwl_sum_parity(rng):
    for _ in range(20):
        n_nodes = int(rng.integers(3, 40))
        n_nets = int(rng.integers(1, 25))
        x = rng.uniform(0, 100, n_nodes)
        y = rng.uniform(0, 100, n_nodes)
        ptr, pins = _random_csr(rng, n_nodes, n_nets)
        q = rng.uniform(0.5, 2.0, n_nets)
        a = _py.hpwl_sum(x, y, ptr, pins, q)
        b = _ext.hpwl_sum(x, y, ptr, pins, q)
        assert a == pytest.approx(b, rel=1e-12)


@needs_ext
def test_route_usage_parity(rng):
    for _ in range(20):
        m, n = int(rng.integers(3, 14)), int(rng.integers(3, 14))
        k = int(rng.integers(1, 40))
        dr = rng.integers(0, m, k)
        dc = rng.integers(0, n, k)
        lr = rng.integers(0, m, k)
        lc = rng.integers(0, n, k)
        w = rng.uniform(0.5, 2.0, k)
        H1, V1 = _py.route_usage(m, n, dr, dc, lr, lc, w)
        H2, V2 = _ext.route_usage(m, n, dr, dc, lr, lc, w)
        assert np.allclose(H1, H2, rtol=1e-12) and np.allclose(V1, V2, rtol=1e-12)


@needs_ext
def test_density_add_parity(rng):
    for _ in range(20):
        m, n = int(rng.integers(3, 14)), int(rng.integers(3, 14))
        cw, ch = 100.0 / n, 100.0 / m
        k = int(rng.integers(1, 12))
        x0 = rng.uniform(0, 80, k)
        y0 = rng.uniform(0, 80, k)
        rects = np.stack([x0, y0, x0 + rng.uniform(1, 20, k), y0 + rng.uniform(1, 20, k)], axis=1)
        a = _py.density_add(rects, m, n, cw, ch)
        b = _ext.density_add(rects, m, n, cw, ch)
        assert np.allclose(a, b, rtol=1e-12, atol=1e-15)


@needs_ext
def test_feasibility_mask_parity(rng):
    for trial in range(30):
        m, n = int(rng.integers(4, 12)), int(rng.integers(4, 12))
        cw, ch = 100.0 / n, 100.0 / m
        mw, mh = float(rng.uniform(2, 45)), float(rng.uniform(2, 45))
        k = int(rng.integers(0, 5))
        x0 = rng.uniform(0, 70, k)
        y0 = rng.uniform(0, 70, k)
        solids = np.stack(
            [x0, y0, x0 + rng.uniform(2, 25, k), y0 + rng.uniform(2, 25, k)], axis=1
        ) if k else np.zeros((0, 4))
        soft = _py.density_add(solids, m, n, cw, ch) if k else np.zeros((m, n))
        a = _py.feasibility_mask(m, n, cw, ch, 100.0, 100.0, mw, mh, soft, solids, 0.6)
        b = _ext.feasibility_mask(m, n, cw, ch, 100.0, 100.0, mw, mh, soft, solids, 0.6)
        assert np.array_equal(a, b), f"trial {trial}"


@needs_ext
def test_fd_run_parity(rng):
    for _ in range(10):
        K = int(rng.integers(3, 25))
        pos = rng.uniform(10, 90, size=(K, 2))
        hw = rng.uniform(0.5, 6, K)
        hh = rng.uniform(0.5, 6, K)
        movable = rng.integers(0, 2, K).astype(np.uint8)
        movable[0] = 1
        E = int(rng.integers(1, 30))
        ea = rng.integers(0, K, E)
        eb = rng.integers(0, K, E)
        ew = rng.uniform(0.5, 2.0, E)
        theta = rng.uniform(0, 2 * np.pi, K)
        jitter = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        args = (pos, hw, hh, movable, ea, eb, ew, jitter, 25, 4.0, 0.5, 0.5, 1.0,
                2.0, 1e-6, 100.0, 100.0)
        p1, it1 = _py.fd_run(*args)
        p2, it2 = _ext.fd_run(*args)
        assert it1 == it2
        assert np.allclose(p1, p2, rtol=1e-9, atol=1e-9)
