"""Shared instance builders for the test suite.

Small hand-built netlists live here so oracle tests stay readable. torch is
pinned to one thread: the networks are tiny and thread sync costs more than
it buys (also matches the single-core latency criterion).
"""

import numpy as np
import pytest
import torch

torch.set_num_threads(1)

from macroplace.env import EnvConfig
from macroplace.fdplace import FdParams
from macroplace.grid import GridSpec
from macroplace.netlist import Net, Netlist, Node, NodeKind, Rect, validate_netlist


def make_node(nid, kind, w=0.0, h=0.0, x=None, y=None):
    fixed = kind == NodeKind.PORT
    return Node(id=nid, kind=kind, width=w, height=h, fixed=fixed, x=x, y=y)


def make_netlist(nodes, nets, canvas=(100.0, 100.0), caps=(10.0, 10.0), blockages=()):
    nl = Netlist(
        nodes=tuple(nodes),
        nets=tuple(nets),
        canvas_width=canvas[0],
        canvas_height=canvas[1],
        h_capacity=caps[0],
        v_capacity=caps[1],
        blockages=tuple(blockages),
    )
    validate_netlist(nl)
    return nl


def square_grid(n, canvas=100.0):
    return GridSpec(rows=n, cols=n, cell_width=canvas / n, cell_height=canvas / n,
                    canvas_width=canvas, canvas_height=canvas)


def coarse_config(n=6, canvas=100.0, lam=0.01, seed=0, fd_iterations=40):
    """Env config with an explicit coarse grid: fast masks, fast FD."""
    return EnvConfig(
        lam=lam, seed=seed, grid=square_grid(n, canvas),
        fd_params=FdParams(iterations=fd_iterations),
    )


def random_small_netlist(rng, max_nodes=50):
    """Random netlist for oracle equivalence tests (<=50 nodes)."""
    n_macros = int(rng.integers(1, 6))
    n_clusters = int(rng.integers(1, 8))
    n_ports = int(rng.integers(0, 4))
    W = float(rng.uniform(50, 150))
    H = float(rng.uniform(50, 150))
    nodes = []
    for _ in range(n_macros):
        nodes.append(make_node(len(nodes), NodeKind.MACRO,
                               float(rng.uniform(3, 15)), float(rng.uniform(3, 15))))
    for _ in range(n_clusters):
        side = float(rng.uniform(1, 6))
        nodes.append(make_node(len(nodes), NodeKind.CLUSTER, side, side))
    for _ in range(n_ports):
        nodes.append(make_node(len(nodes), NodeKind.PORT,
                               x=float(rng.uniform(0, W)), y=float(rng.uniform(0, H))))
    max_total = min(max_nodes, len(nodes))
    nodes = nodes[:max_total]
    n_nets = int(rng.integers(1, 3 * len(nodes)))
    nets = []
    for _ in range(n_nets):
        p = min(int(rng.integers(2, 6)), len(nodes))
        if p < 2:
            continue
        picked = rng.choice(len(nodes), size=p, replace=False)
        nets.append(Net(id=len(nets), driver=int(picked[0]),
                        loads=tuple(int(x) for x in picked[1:]),
                        weight=float(rng.uniform(0.5, 2.0))))
    if not nets:
        nets = [Net(id=0, driver=0, loads=(1,))]
    return make_netlist(nodes, nets, canvas=(W, H))


def random_placement(nl, rng):
    """Arbitrary on-canvas positions for every node (ignores legality)."""
    from macroplace.grid import Placement

    placement = Placement()
    for node in nl.nodes:
        if node.kind == NodeKind.PORT:
            placement.positions[node.id] = (node.x, node.y)
        else:
            hw, hh = node.width / 2, node.height / 2
            placement.positions[node.id] = (
                float(rng.uniform(hw, nl.canvas_width - hw)),
                float(rng.uniform(hh, nl.canvas_height - hh)),
            )
    return placement


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
