"""Force-directed placement of standard-cell clusters around fixed macros.

Springs pull connected nodes together (weight x distance); overlapping nodes
repel along the minimal-penetration axis. All moves are synchronous, clamped
to a per-iteration maximum that decays linearly, and clusters never leave the
canvas. Macros and ports never move.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import MacrosUnplaced
from .grid import GridSpec, Placement
from .netlist import Netlist, NodeKind


@dataclass(frozen=True)
class FdParams:
    iterations: int = 100
    max_move: float | None = None        # default 2x cell width
    max_move_final: float | None = None  # default 0.25x cell width
    repulsion_scale: float = 1.0
    convergence_eps: float | None = None  # default 1e-3 x cell width
    step: float = 0.5

    def resolved(self, grid: GridSpec) -> tuple[float, float, float]:
        cw = grid.cell_width
        start = self.max_move if self.max_move is not None else 2.0 * cw
        final = self.max_move_final if self.max_move_final is not None else 0.25 * cw
        eps = self.convergence_eps if self.convergence_eps is not None else 1e-3 * cw
        return start, final, eps


def init_positions(nl: Netlist, grid: GridSpec, seed: int) -> Placement:
    """Seed clusters at the canvas center with a small deterministic jitter
    (radius 0.1 cell widths) so coincident nodes separate."""
    rng = np.random.default_rng(seed)
    cx, cy = nl.canvas_width / 2.0, nl.canvas_height / 2.0
    radius = 0.1 * grid.cell_width
    placement = Placement()
    for node in sorted(nl.clusters, key=lambda n: n.id):
        r = radius * math.sqrt(rng.random())
        theta = 2.0 * math.pi * rng.random()
        placement.positions[node.id] = (cx + r * math.cos(theta), cy + r * math.sin(theta))
    return placement


def place_clusters(
    nl: Netlist,
    macro_placement: Placement,
    grid: GridSpec,
    params: FdParams | None = None,
    seed: int = 0,
) -> Placement:
    """Relax cluster positions with the spring system; returns a new placement
    containing macros (unchanged), ports (pinned), and cluster positions."""
    params = params or FdParams()
    for mac in nl.macros:
        if mac.id not in macro_placement.positions:
            raise MacrosUnplaced(f"macro {mac.id} has no position")

    n_nodes = len(nl.nodes)
    pos = np.zeros((n_nodes, 2))
    half_w = np.zeros(n_nodes)
    half_h = np.zeros(n_nodes)
    movable = np.zeros(n_nodes, dtype=np.uint8)

    init = init_positions(nl, grid, seed)
    for node in nl.nodes:
        half_w[node.id] = node.width / 2.0
        half_h[node.id] = node.height / 2.0
        if node.kind == NodeKind.MACRO:
            pos[node.id] = macro_placement.positions[node.id]
        elif node.kind == NodeKind.PORT:
            pos[node.id] = (node.x, node.y)
        elif node.kind == NodeKind.CLUSTER:
            movable[node.id] = 1
            if node.id in macro_placement.positions:
                pos[node.id] = macro_placement.positions[node.id]
            else:
                pos[node.id] = init.positions[node.id]
        else:
            raise MacrosUnplaced("raw standard cells must be clustered before placement")

    edges = nl.star_edges()
    edge_a = np.array([a for a, _, _ in edges], dtype=np.int64)
    edge_b = np.array([b for _, b, _ in edges], dtype=np.int64)
    edge_w = np.array([w for _, _, w in edges], dtype=np.float64)

    rng = np.random.default_rng(seed + 1)
    theta = rng.uniform(0.0, 2.0 * math.pi, size=n_nodes)
    jitter = np.stack([np.cos(theta), np.sin(theta)], axis=1)

    start, final, eps = params.resolved(grid)
    out_pos, _ = kernels.fd_run(
        pos, half_w, half_h, movable, edge_a, edge_b, edge_w, jitter,
        params.iterations, start, final, params.step,
        params.repulsion_scale, min(grid.cell_width, grid.cell_height), eps,
        nl.canvas_width, nl.canvas_height,
    )

    result = macro_placement.copy()
    for node in nl.nodes:
        if node.kind == NodeKind.CLUSTER:
            result.positions[node.id] = (float(out_pos[node.id, 0]), float(out_pos[node.id, 1]))
        elif node.kind == NodeKind.PORT:
            result.positions[node.id] = (node.x, node.y)
    return result
