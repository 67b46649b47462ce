"""Canvas discretization, density accounting, feasibility masking, and
greedy legalization.

Grid convention: ``m`` rows subdivide the canvas height, ``n`` columns the
width; cell (r, c) spans [c*cell_w, (c+1)*cell_w] x [r*cell_h, (r+1)*cell_h]
and actions index cells row-major (a = r*n + c).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .errors import LegalizationFailed, ValidationError
from .netlist import Netlist, Node, NodeKind, Rect

GRID_MIN = 4
GRID_MAX = 128
_REL_EPS = 1e-9


@dataclass(frozen=True)
class GridSpec:
    rows: int
    cols: int
    cell_width: float
    cell_height: float
    canvas_width: float
    canvas_height: float

    def __post_init__(self):
        if not (1 <= self.rows <= GRID_MAX and 1 <= self.cols <= GRID_MAX):
            raise ValidationError("grid rows/cols out of [1, 128]")
        if abs(self.rows * self.cell_height - self.canvas_height) > _REL_EPS * self.canvas_height:
            raise ValidationError("rows * cell_height must equal canvas_height")
        if abs(self.cols * self.cell_width - self.canvas_width) > _REL_EPS * self.canvas_width:
            raise ValidationError("cols * cell_width must equal canvas_width")

    @property
    def num_cells(self) -> int:
        return self.rows * self.cols

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        return ((col + 0.5) * self.cell_width, (row + 0.5) * self.cell_height)

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        r = min(self.rows - 1, max(0, int(math.floor(y / self.cell_height))))
        c = min(self.cols - 1, max(0, int(math.floor(x / self.cell_width))))
        return r, c


@dataclass
class Placement:
    """Node id -> center position; macros placed on the grid also record their cell."""

    positions: dict[int, tuple[float, float]] = field(default_factory=dict)
    grid_cells: dict[int, tuple[int, int]] = field(default_factory=dict)

    def copy(self) -> "Placement":
        return Placement(dict(self.positions), dict(self.grid_cells))


@dataclass
class DensityGrid:
    """Occupancy fractions per cell (blockage cells preset to 1.0) plus the
    solid geometry needed for overlap-aware feasibility tests."""

    values: np.ndarray
    blocked: np.ndarray
    solid_rects: np.ndarray  # (K, 4) [x0, y0, x1, y1]: placed macros + blockages


def _quantized_cells(extent: float, cell: float) -> int:
    """ceil(extent / cell) with a snap for near-exact multiples."""
    k = extent / cell
    kr = round(k)
    if abs(k - kr) <= _REL_EPS * max(1.0, k):
        return max(1, int(kr))
    return max(1, int(math.ceil(k)))


def grid_waste(nl: Netlist, rows: int, cols: int) -> float:
    """Total cell-quantization overage of all macros for an (rows, cols) grid."""
    cw = nl.canvas_width / cols
    ch = nl.canvas_height / rows
    waste = 0.0
    for mac in nl.macros:
        qw = _quantized_cells(mac.width, cw) * cw
        qh = _quantized_cells(mac.height, ch) * ch
        waste += qw * qh - mac.area
    return waste


def select_grid(
    nl: Netlist,
    rows: Iterable[int] | None = None,
    cols: Iterable[int] | None = None,
) -> GridSpec:
    """Pick the (rows, cols) minimizing quantization waste; ties prefer
    fewer cells, then fewer rows. Default search range is [4, 128] each."""
    row_cand = np.array(sorted(rows) if rows is not None else range(GRID_MIN, GRID_MAX + 1))
    col_cand = np.array(sorted(cols) if cols is not None else range(GRID_MIN, GRID_MAX + 1))
    macros = nl.macros
    W, H = nl.canvas_width, nl.canvas_height

    if macros:
        mw = np.array([mac.width for mac in macros])
        mh = np.array([mac.height for mac in macros])
        # quantized extent per (candidate, macro); waste separates over axes
        qc = np.empty((len(col_cand), len(macros)))
        for i, n in enumerate(col_cand):
            cw = W / n
            qc[i] = [_quantized_cells(w, cw) * cw for w in mw]
        qr = np.empty((len(row_cand), len(macros)))
        for i, m in enumerate(row_cand):
            ch = H / m
            qr[i] = [_quantized_cells(h, ch) * ch for h in mh]
        waste = qr @ qc.T - np.sum(mw * mh)  # (rows, cols)
    else:
        waste = np.zeros((len(row_cand), len(col_cand)))

    best = waste.min()
    tol = _REL_EPS * (1.0 + abs(best))
    cand = np.argwhere(waste <= best + tol)
    key = [(row_cand[r] * col_cand[c], row_cand[r]) for r, c in cand]
    r_idx, c_idx = cand[min(range(len(cand)), key=lambda i: key[i])]
    m, n = int(row_cand[r_idx]), int(col_cand[c_idx])
    return GridSpec(
        rows=m, cols=n, cell_width=W / n, cell_height=H / m,
        canvas_width=W, canvas_height=H,
    )


def _node_rect(node: Node, pos: tuple[float, float]) -> tuple[float, float, float, float]:
    x, y = pos
    return (x - node.width / 2, y - node.height / 2, x + node.width / 2, y + node.height / 2)


def blocked_cells(grid: GridSpec, blockages: Sequence[Rect]) -> np.ndarray:
    """Cells intersecting any blockage (positive-area overlap)."""
    blocked = np.zeros((grid.rows, grid.cols), dtype=bool)
    eps = _REL_EPS * (grid.cell_width + grid.cell_height)
    for b in blockages:
        c0 = max(0, int(math.floor(b.x / grid.cell_width + eps)))
        c1 = min(grid.cols - 1, int(math.ceil(b.x2 / grid.cell_width - eps)) - 1)
        r0 = max(0, int(math.floor(b.y / grid.cell_height + eps)))
        r1 = min(grid.rows - 1, int(math.ceil(b.y2 / grid.cell_height - eps)) - 1)
        if c1 >= c0 and r1 >= r0:
            blocked[r0 : r1 + 1, c0 : c1 + 1] = True
    return blocked


def density_map(grid: GridSpec, placement: Placement, nl: Netlist) -> DensityGrid:
    """Per-cell occupancy: blockage indicator plus overlap-area fractions of
    every placed node. Pure function of its inputs."""
    blocked = blocked_cells(grid, nl.blockages)
    values = blocked.astype(np.float64)
    rects = []
    solid = [(b.x, b.y, b.x2, b.y2) for b in nl.blockages]
    for node_id, pos in sorted(placement.positions.items()):
        node = nl.node(node_id)
        if node.area <= 0:
            continue
        rect = _node_rect(node, pos)
        rects.append(rect)
        if node.kind == NodeKind.MACRO:
            solid.append(rect)
    if rects:
        values = values + kernels.density_add(
            np.array(rects, dtype=np.float64), grid.rows, grid.cols,
            grid.cell_width, grid.cell_height,
        )
    return DensityGrid(
        values=values,
        blocked=blocked,
        solid_rects=np.array(solid, dtype=np.float64).reshape(-1, 4),
    )


def macro_density_grid(grid: GridSpec, placement: Placement, nl: Netlist) -> DensityGrid:
    """Density over solids only (placed macros + blockages): the hard-constraint
    view used for masking during sequential macro placement."""
    macro_only = Placement(
        positions={
            i: p for i, p in placement.positions.items()
            if nl.node(i).kind == NodeKind.MACRO
        },
        grid_cells=dict(placement.grid_cells),
    )
    return density_map(grid, macro_only, nl)


def feasibility_mask(
    grid: GridSpec, density: DensityGrid, macro: Node, max_density: float
) -> np.ndarray:
    """Binary rows x cols grid of legal center cells for ``macro``.

    Feasible means: fully on canvas, zero overlap with placed macros and
    blockages, and no partially-covered cell pushed above max_density.
    All-zero masks are legal output.
    """
    return kernels.feasibility_mask(
        grid.rows, grid.cols, grid.cell_width, grid.cell_height,
        grid.canvas_width, grid.canvas_height,
        macro.width, macro.height,
        np.ascontiguousarray(density.values, dtype=np.float64),
        density.solid_rects, max_density,
    )


def hard_density_ok(
    grid: GridSpec, placement: Placement, nl: Netlist, max_density: float
) -> bool:
    """Check the hard constraint on a full placement: solids pairwise disjoint
    and every cell shared by two or more contributors at or below max_density.

    Cells carrying a single solid are that solid's own territory (anything up
    to full coverage), mirroring the masking rule that only guards density
    accumulation across distinct objects.
    """
    dg = macro_density_grid(grid, placement, nl)
    solids = dg.solid_rects
    eps_len = _REL_EPS * (grid.cell_width + grid.cell_height)
    for i in range(len(solids)):
        for j in range(i + 1, len(solids)):
            ox = min(solids[i][2], solids[j][2]) - max(solids[i][0], solids[j][0])
            oy = min(solids[i][3], solids[j][3]) - max(solids[i][1], solids[j][1])
            if ox > eps_len and oy > eps_len:
                return False
    contributors = dg.blocked.astype(np.int64)
    for x0, y0, x1, y1 in solids[len(nl.blockages):]:
        frac = kernels.density_add(
            np.array([[x0, y0, x1, y1]]), grid.rows, grid.cols,
            grid.cell_width, grid.cell_height,
        )
        contributors += (frac > 1e-12).astype(np.int64)
    shared = contributors >= 2
    return bool(np.all(dg.values[shared] <= max_density + 1e-9))


def _overlaps(a, b, spacing: float, eps: float) -> bool:
    ox = min(a[2], b[2]) - max(a[0], b[0]) + spacing
    oy = min(a[3], b[3]) - max(a[1], b[1]) + spacing
    return ox > eps and oy > eps


def legalize(
    placement: Placement, nl: Netlist, grid: GridSpec, min_spacing: float = 0.0
) -> Placement:
    """Snap macros to the nearest non-overlapping grid-cell centers.

    Macros are processed in descending area order; each moves to the closest
    (Euclidean over cell centers) position that stays on canvas, clears all
    blockages, keeps min_spacing from already-legalized macros. Idempotent on
    its own output. Raises LegalizationFailed when a macro has no legal cell.
    """
    macros = sorted(nl.macros, key=lambda nd: (-nd.area, nd.id))
    eps_len = _REL_EPS * (grid.cell_width + grid.cell_height)
    tol = _REL_EPS * (grid.canvas_width + grid.canvas_height)
    out = placement.copy()
    placed_rects: list[tuple[float, float, float, float]] = [
        (b.x, b.y, b.x2, b.y2) for b in nl.blockages
    ]

    centers_x = (np.arange(grid.cols) + 0.5) * grid.cell_width
    centers_y = (np.arange(grid.rows) + 0.5) * grid.cell_height
    for mac in macros:
        if mac.id not in placement.positions:
            raise LegalizationFailed(f"macro {mac.id} has no position to legalize")
        px, py = placement.positions[mac.id]
        dx = centers_x[None, :] - px
        dy = centers_y[:, None] - py
        dist = dx * dx + dy * dy
        order = np.argsort(dist, axis=None, kind="stable")
        placed = False
        for flat in order:
            r, c = divmod(int(flat), grid.cols)
            cx, cy = grid.cell_center(r, c)
            rect = (cx - mac.width / 2, cy - mac.height / 2,
                    cx + mac.width / 2, cy + mac.height / 2)
            if rect[0] < -tol or rect[1] < -tol or rect[2] > grid.canvas_width + tol \
                    or rect[3] > grid.canvas_height + tol:
                continue
            if any(_overlaps(rect, other, min_spacing, eps_len) for other in placed_rects):
                continue
            out.positions[mac.id] = (cx, cy)
            out.grid_cells[mac.id] = (r, c)
            placed_rects.append(rect)
            placed = True
            break
        if not placed:
            raise LegalizationFailed(f"no feasible cell for macro {mac.id}")
    return out
