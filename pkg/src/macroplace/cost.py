"""Proxy cost kernel: half-perimeter wirelength, deterministic L-route
congestion with smoothing and top-10% pooling, and the combined reward."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.ndimage import convolve1d

from . import kernels
from .errors import EmptyNet, UnplacedNode
from .grid import GridSpec, Placement, hard_density_ok
from .netlist import Netlist, NodeKind

DEFAULT_LAMBDA = 0.01
DEFAULT_MAX_DENSITY = 0.6
_SMOOTH_KERNEL = np.full(5, 1.0 / 5.0)


@dataclass(frozen=True)
class CostBreakdown:
    wirelength: float
    congestion: float
    density_ok: bool
    reward: float

    def to_dict(self) -> dict:
        return {
            "wirelength": self.wirelength,
            "congestion": self.congestion,
            "reward": self.reward,
            "density_ok": self.density_ok,
        }


@dataclass(frozen=True)
class CongestionGrids:
    """Track usage over capacity, horizontal and vertical kept separately."""

    H: np.ndarray
    V: np.ndarray


def hpwl_net(pins: Sequence[tuple[float, float]]) -> float:
    """Half-perimeter of the pin bounding box, one unit of spread per axis."""
    if not pins:
        raise EmptyNet("net has no pins")
    xs = [p[0] for p in pins]
    ys = [p[1] for p in pins]
    return (max(xs) - min(xs) + 1.0) + (max(ys) - min(ys) + 1.0)


def resolve_positions(nl: Netlist, placement: Placement) -> dict[int, tuple[float, float]]:
    """Node centers for cost evaluation; fixed ports fall back to their pins."""
    pos = dict(placement.positions)
    for node in nl.nodes:
        if node.id not in pos and node.x is not None and node.y is not None:
            pos[node.id] = (node.x, node.y)
    return pos


def _pin_arrays(nl: Netlist, positions: Mapping[int, tuple[float, float]]):
    n_nodes = len(nl.nodes)
    x = np.zeros(n_nodes)
    y = np.zeros(n_nodes)
    for net in nl.nets:
        for pin in net.pins:
            if pin not in positions:
                raise UnplacedNode(pin)
    for i, p in positions.items():
        x[i], y[i] = p
    return x, y


def q_factor(pin_count: int, table: Mapping[int, float] | None) -> float:
    """Pin-count normalization factor; identity unless a table is supplied."""
    if table is None:
        return 1.0
    return float(table.get(pin_count, 1.0))


def hpwl_total(
    nl: Netlist,
    placement: Placement,
    q_table: Mapping[int, float] | None = None,
) -> float:
    """Normalized weighted HPWL over all nets.

    The raw sum of q(i) * HPWL(i) is divided by net count times the canvas
    half-perimeter, giving a scale-free quantity comparable across blocks.
    """
    positions = resolve_positions(nl, placement)
    x, y = _pin_arrays(nl, positions)
    net_ptr = np.zeros(len(nl.nets) + 1, dtype=np.int64)
    pins = []
    q = np.empty(len(nl.nets))
    for i, net in enumerate(nl.nets):
        pins.extend(net.pins)
        net_ptr[i + 1] = len(pins)
        q[i] = net.weight * q_factor(net.pin_count, q_table)
    raw = kernels.hpwl_sum(x, y, net_ptr, np.array(pins, dtype=np.int64), q)
    return raw / (len(nl.nets) * (nl.canvas_width + nl.canvas_height))


def route_nets(nl: Netlist, placement: Placement, grid: GridSpec) -> CongestionGrids:
    """Deterministic single-bend routing of every driver->load pair.

    Each pair is routed with a horizontal segment on the driver's row, then a
    vertical segment on the load's column; traversed cells accumulate net
    weight, normalized by the per-cell track capacity.
    """
    positions = resolve_positions(nl, placement)
    dr, dc, lr, lc, w = [], [], [], [], []
    for net in nl.nets:
        for pin in net.pins:
            if pin not in positions:
                raise UnplacedNode(pin)
        drv_r, drv_c = grid.cell_of(*positions[net.driver])
        for load in net.loads:
            ld_r, ld_c = grid.cell_of(*positions[load])
            dr.append(drv_r)
            dc.append(drv_c)
            lr.append(ld_r)
            lc.append(ld_c)
            w.append(net.weight)
    H, V = kernels.route_usage(
        grid.rows, grid.cols,
        np.array(dr, dtype=np.int64), np.array(dc, dtype=np.int64),
        np.array(lr, dtype=np.int64), np.array(lc, dtype=np.int64),
        np.array(w, dtype=np.float64),
    )
    return CongestionGrids(H=H / nl.h_capacity, V=V / nl.v_capacity)


def smooth_congestion(grids: CongestionGrids) -> CongestionGrids:
    """1x5 horizontal mean filter on H, 5x1 vertical on V; zero padding with
    the full kernel size as divisor."""
    H = convolve1d(grids.H, _SMOOTH_KERNEL, axis=1, mode="constant", cval=0.0)
    V = convolve1d(grids.V, _SMOOTH_KERNEL, axis=0, mode="constant", cval=0.0)
    return CongestionGrids(H=H, V=V)


def congestion_cost(grids: CongestionGrids) -> float:
    """Mean of the top 10% of all pooled H and V cell values."""
    pool = np.concatenate([grids.H.ravel(), grids.V.ravel()])
    k = int(np.ceil(0.1 * pool.size))
    top = np.partition(pool, pool.size - k)[pool.size - k :]
    return float(top.mean())


def combined_reward(wirelength: float, congestion: float, lam: float) -> float:
    return -wirelength - lam * congestion


def infeasible_reward(lam: float) -> float:
    """Penalty for episodes that dead-end; worse than any reachable cost."""
    return -(1.0 + lam)


def evaluate(
    nl: Netlist,
    placement: Placement,
    grid: GridSpec,
    lam: float = DEFAULT_LAMBDA,
    max_density: float = DEFAULT_MAX_DENSITY,
    q_table: Mapping[int, float] | None = None,
) -> CostBreakdown:
    """Full cost of a completed placement.

    density_ok reflects the hard constraint on solids (macros + blockages);
    episodes built through masking satisfy it by construction.
    """
    wl = hpwl_total(nl, placement, q_table)
    cong = congestion_cost(smooth_congestion(route_nets(nl, placement, grid)))
    ok = hard_density_ok(grid, placement, nl, max_density)
    reward = combined_reward(wl, cong, lam) if ok else infeasible_reward(lam)
    return CostBreakdown(wirelength=wl, congestion=cong, density_ok=ok, reward=reward)
