"""Pure-numpy implementations of the hot cost/geometry kernels.

Selected automatically when the compiled extension is unavailable (or when
MACROPLACE_PURE_PYTHON=1). Semantics are identical to ``_ext``; only speed
differs. All functions are pure and allocate their outputs.
"""

from __future__ import annotations

import numpy as np

IMPL_NAME = "python"

_REL_EPS = 1e-9
_FULL_COVER = 1.0 - 1e-12


def hpwl_sum(x, y, net_ptr, pins, q):
    """Sum over nets of q[i] * ((max_x - min_x + 1) + (max_y - min_y + 1)).

    x, y: positions indexed by node id; pins/net_ptr: CSR pin lists.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    total = 0.0
    for i in range(len(net_ptr) - 1):
        lo, hi = net_ptr[i], net_ptr[i + 1]
        ids = pins[lo:hi]
        px = x[ids]
        py = y[ids]
        total += q[i] * ((px.max() - px.min() + 1.0) + (py.max() - py.min() + 1.0))
    return float(total)


def route_usage(m, n, dr, dc, lr, lc, w):
    """Single-bend L routes (horizontal at the driver's row, then vertical at
    the load's column); returns raw track usage grids (H, V)."""
    H = np.zeros((m, n), dtype=np.float64)
    V = np.zeros((m, n), dtype=np.float64)
    for k in range(len(dr)):
        r0, c0, r1, c1, wt = int(dr[k]), int(dc[k]), int(lr[k]), int(lc[k]), float(w[k])
        if r0 == r1 and c0 == c1:
            continue
        if c0 != c1:
            H[r0, min(c0, c1) : max(c0, c1) + 1] += wt
        if r0 != r1:
            V[min(r0, r1) : max(r0, r1) + 1, c1] += wt
    return H, V


def density_add(rects, m, n, cell_w, cell_h):
    """Accumulate per-cell occupancy fractions for rectangles [x0,y0,x1,y1]."""
    out = np.zeros((m, n), dtype=np.float64)
    cell_area = cell_w * cell_h
    col_edges = np.arange(n + 1) * cell_w
    row_edges = np.arange(m + 1) * cell_h
    for x0, y0, x1, y1 in np.asarray(rects, dtype=np.float64).reshape(-1, 4):
        c0 = max(0, min(n - 1, int(np.floor(x0 / cell_w))))
        c1 = max(0, min(n - 1, int(np.ceil(x1 / cell_w)) - 1))
        r0 = max(0, min(m - 1, int(np.floor(y0 / cell_h))))
        r1 = max(0, min(m - 1, int(np.ceil(y1 / cell_h)) - 1))
        ox = np.minimum(x1, col_edges[c0 + 1 : c1 + 2]) - np.maximum(x0, col_edges[c0 : c1 + 1])
        oy = np.minimum(y1, row_edges[r0 + 1 : r1 + 2]) - np.maximum(y0, row_edges[r0 : r1 + 1])
        ox = np.clip(ox, 0.0, None)
        oy = np.clip(oy, 0.0, None)
        out[r0 : r1 + 1, c0 : c1 + 1] += np.outer(oy, ox) / cell_area
    return out


def feasibility_mask(
    m, n, cell_w, cell_h, canvas_w, canvas_h, mw, mh, soft, solids, max_density
):
    """Binary grid of cells whose centers can host the macro's center.

    A cell is feasible iff the macro (1) stays fully on canvas, (2) overlaps
    no solid rectangle (placed macros, blockages), and (3) every grid cell it
    touches that already carries density stays at or below max_density after
    adding the macro's own coverage fraction. Cells holding no other mass are
    the macro's own territory and are exempt from (3); disjointness of solids
    is what (2) enforces there.
    """
    tol = _REL_EPS * (canvas_w + canvas_h)
    eps_len = _REL_EPS * (cell_w + cell_h)
    solids = np.asarray(solids, dtype=np.float64).reshape(-1, 4)
    cell_area = cell_w * cell_h
    hw, hh = mw / 2.0, mh / 2.0

    def col_range(lo, hi):
        """Columns whose centers lie strictly inside (lo, hi)."""
        c0 = int(np.floor(lo / cell_w - 0.5)) + 1
        c1 = int(np.ceil(hi / cell_w - 0.5)) - 1
        return max(0, c0), min(n - 1, c1)

    def row_range(lo, hi):
        r0 = int(np.floor(lo / cell_h - 0.5)) + 1
        r1 = int(np.ceil(hi / cell_h - 0.5)) - 1
        return max(0, r0), min(m - 1, r1)

    # (1) on-canvas: centers within [hw - tol, W - hw + tol] (inclusive)
    mask = np.zeros((m, n), dtype=np.uint8)
    c_lo = int(np.ceil((hw - tol) / cell_w - 0.5 - _REL_EPS))
    c_hi = int(np.floor((canvas_w - hw + tol) / cell_w - 0.5 + _REL_EPS))
    r_lo = int(np.ceil((hh - tol) / cell_h - 0.5 - _REL_EPS))
    r_hi = int(np.floor((canvas_h - hh + tol) / cell_h - 0.5 + _REL_EPS))
    if c_lo > min(n - 1, c_hi) or r_lo > min(m - 1, r_hi):
        return mask
    mask[max(0, r_lo) : r_hi + 1, max(0, c_lo) : c_hi + 1] = 1

    # (2) solids forbid a rectangle of center cells (strict positive overlap)
    for sx0, sy0, sx1, sy1 in solids:
        fc0, fc1 = col_range(sx0 - hw + eps_len, sx1 + hw - eps_len)
        fr0, fr1 = row_range(sy0 - hh + eps_len, sy1 + hh - eps_len)
        if fc0 <= fc1 and fr0 <= fr1:
            mask[fr0 : fr1 + 1, fc0 : fc1 + 1] = 0

    # (3) density: only candidates whose touched range holds existing mass
    occ = (soft > 1e-12).astype(np.int64)
    sat = occ.cumsum(axis=0).cumsum(axis=1)

    def range_sum(r0, r1, c0, c1):
        total = sat[r1, c1]
        if r0 > 0:
            total -= sat[r0 - 1, c1]
        if c0 > 0:
            total -= sat[r1, c0 - 1]
        if r0 > 0 and c0 > 0:
            total += sat[r0 - 1, c0 - 1]
        return total

    col_edges = np.arange(n + 1) * cell_w
    row_edges = np.arange(m + 1) * cell_h
    for r, c in zip(*np.nonzero(mask)):
        cx = (c + 0.5) * cell_w
        cy = (r + 0.5) * cell_h
        bx0, bx1 = cx - hw, cx + hw
        by0, by1 = cy - hh, cy + hh
        c0 = max(0, min(n - 1, int(np.floor(bx0 / cell_w + _REL_EPS))))
        c1 = max(0, min(n - 1, int(np.ceil(bx1 / cell_w - _REL_EPS)) - 1))
        r0 = max(0, min(m - 1, int(np.floor(by0 / cell_h + _REL_EPS))))
        r1 = max(0, min(m - 1, int(np.ceil(by1 / cell_h - _REL_EPS)) - 1))
        if range_sum(r0, r1, c0, c1) == 0:
            continue
        ox = np.clip(
            np.minimum(bx1, col_edges[c0 + 1 : c1 + 2]) - np.maximum(bx0, col_edges[c0 : c1 + 1]),
            0.0,
            None,
        )
        oy = np.clip(
            np.minimum(by1, row_edges[r0 + 1 : r1 + 2]) - np.maximum(by0, row_edges[r0 : r1 + 1]),
            0.0,
            None,
        )
        frac = np.outer(oy, ox) / cell_area
        existing = soft[r0 : r1 + 1, c0 : c1 + 1]
        occupied = existing > 1e-12
        if np.any(occupied & (frac > 1e-12) & (existing + frac > max_density + 1e-12)):
            mask[r, c] = 0
    return mask


def fd_run(
    pos,
    half_w,
    half_h,
    movable,
    edge_a,
    edge_b,
    edge_w,
    jitter,
    iterations,
    max_move_start,
    max_move_end,
    step,
    repulsion_scale,
    repulsion_norm,
    convergence_eps,
    canvas_w,
    canvas_h,
):
    """Force-directed relaxation: spring attraction along edges, overlap
    repulsion along the minimal-penetration axis, synchronous clamped moves.

    Returns (positions, iterations_executed). Fixed nodes never move.
    """
    pos = np.array(pos, dtype=np.float64)
    half_w = np.asarray(half_w, dtype=np.float64)
    half_h = np.asarray(half_h, dtype=np.float64)
    movable = np.asarray(movable, dtype=bool)
    K = len(pos)
    edge_a = np.asarray(edge_a, dtype=np.int64)
    edge_b = np.asarray(edge_b, dtype=np.int64)
    edge_w = np.asarray(edge_w, dtype=np.float64)
    has_area = (half_w > 0) & (half_h > 0)

    lo_x = np.minimum(half_w, canvas_w / 2.0)
    hi_x = np.maximum(canvas_w - half_w, canvas_w / 2.0)
    lo_y = np.minimum(half_h, canvas_h / 2.0)
    hi_y = np.maximum(canvas_h - half_h, canvas_h / 2.0)

    iters_run = 0
    for t in range(iterations):
        frac = t / (iterations - 1) if iterations > 1 else 0.0
        mm = max_move_start + (max_move_end - max_move_start) * frac
        force = np.zeros((K, 2), dtype=np.float64)

        if len(edge_a):
            delta = pos[edge_b] - pos[edge_a]
            pull = delta * edge_w[:, None]
            np.add.at(force, edge_a, np.where(movable[edge_a][:, None], pull, 0.0))
            np.add.at(force, edge_b, np.where(movable[edge_b][:, None], -pull, 0.0))

        if repulsion_scale > 0.0 and np.any(has_area):
            idx = np.nonzero(has_area)[0]
            px = pos[idx, 0]
            py = pos[idx, 1]
            hw = half_w[idx]
            hh = half_h[idx]
            ox = np.minimum(px[:, None] + hw[:, None], px[None, :] + hw[None, :]) - np.maximum(
                px[:, None] - hw[:, None], px[None, :] - hw[None, :]
            )
            oy = np.minimum(py[:, None] + hh[:, None], py[None, :] + hh[None, :]) - np.maximum(
                py[:, None] - hh[:, None], py[None, :] - hh[None, :]
            )
            overlap = (ox > 0) & (oy > 0)
            np.fill_diagonal(overlap, False)
            ii, jj = np.nonzero(np.triu(overlap, 1))
            for a, b in zip(idx[ii], idx[jj]):
                oxa = min(pos[a, 0] + half_w[a], pos[b, 0] + half_w[b]) - max(
                    pos[a, 0] - half_w[a], pos[b, 0] - half_w[b]
                )
                oya = min(pos[a, 1] + half_h[a], pos[b, 1] + half_h[b]) - max(
                    pos[a, 1] - half_h[a], pos[b, 1] - half_h[b]
                )
                mag = repulsion_scale * oxa * oya / repulsion_norm
                if oxa < oya:
                    s = pos[a, 0] - pos[b, 0]
                    d = np.array([1.0, 0.0]) if s > 0 else np.array([-1.0, 0.0])
                    if s == 0.0:
                        d = np.array([1.0 if jitter[a, 0] >= 0 else -1.0, 0.0])
                else:
                    s = pos[a, 1] - pos[b, 1]
                    d = np.array([0.0, 1.0]) if s > 0 else np.array([0.0, -1.0])
                    if s == 0.0:
                        d = np.array([0.0, 1.0 if jitter[a, 1] >= 0 else -1.0])
                if movable[a]:
                    force[a] += mag * d
                if movable[b]:
                    force[b] -= mag * d

        move = step * force
        norms = np.linalg.norm(move, axis=1)
        scale = np.where(norms > mm, mm / np.maximum(norms, 1e-300), 1.0)
        move *= scale[:, None]
        new_pos = pos.copy()
        new_pos[movable] += move[movable]
        new_pos[:, 0] = np.clip(new_pos[:, 0], lo_x, hi_x)
        new_pos[:, 1] = np.clip(new_pos[:, 1], lo_y, hi_y)
        new_pos[~movable] = pos[~movable]

        disp = np.linalg.norm(new_pos - pos, axis=1)
        max_disp = disp.max() if K else 0.0
        pos = new_pos
        iters_run = t + 1
        if max_disp < convergence_eps:
            break
    return pos, iters_run
