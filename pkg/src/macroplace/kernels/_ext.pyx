# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled implementations of the hot cost/geometry kernels.

Same contracts as kernels._py; see that module for documentation.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport ceil, floor, sqrt

cnp.import_array()

IMPL_NAME = "compiled"

cdef double _REL_EPS = 1e-9
cdef double _FULL_COVER = 1.0 - 1e-12


def hpwl_sum(x, y, net_ptr, pins, q):
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef long[::1] ptr = np.ascontiguousarray(net_ptr, dtype=np.int64)
    cdef long[::1] pin = np.ascontiguousarray(pins, dtype=np.int64)
    cdef double[::1] qv = np.ascontiguousarray(q, dtype=np.float64)
    cdef double total = 0.0
    cdef double xmin, xmax, ymin, ymax, px, py
    cdef Py_ssize_t i, k, lo, hi
    for i in range(ptr.shape[0] - 1):
        lo = ptr[i]
        hi = ptr[i + 1]
        xmin = xmax = xv[pin[lo]]
        ymin = ymax = yv[pin[lo]]
        for k in range(lo + 1, hi):
            px = xv[pin[k]]
            py = yv[pin[k]]
            if px < xmin:
                xmin = px
            elif px > xmax:
                xmax = px
            if py < ymin:
                ymin = py
            elif py > ymax:
                ymax = py
        total += qv[i] * ((xmax - xmin + 1.0) + (ymax - ymin + 1.0))
    return total


def route_usage(int m, int n, dr, dc, lr, lc, w):
    cdef long[::1] drv = np.ascontiguousarray(dr, dtype=np.int64)
    cdef long[::1] dcv = np.ascontiguousarray(dc, dtype=np.int64)
    cdef long[::1] lrv = np.ascontiguousarray(lr, dtype=np.int64)
    cdef long[::1] lcv = np.ascontiguousarray(lc, dtype=np.int64)
    cdef double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    H_arr = np.zeros((m, n), dtype=np.float64)
    V_arr = np.zeros((m, n), dtype=np.float64)
    cdef double[:, ::1] H = H_arr
    cdef double[:, ::1] V = V_arr
    cdef Py_ssize_t k, c, r
    cdef long r0, c0, r1, c1, a, b
    cdef double wt
    for k in range(drv.shape[0]):
        r0 = drv[k]
        c0 = dcv[k]
        r1 = lrv[k]
        c1 = lcv[k]
        wt = wv[k]
        if r0 == r1 and c0 == c1:
            continue
        if c0 != c1:
            a = c0 if c0 < c1 else c1
            b = c1 if c0 < c1 else c0
            for c in range(a, b + 1):
                H[r0, c] += wt
        if r0 != r1:
            a = r0 if r0 < r1 else r1
            b = r1 if r0 < r1 else r0
            for r in range(a, b + 1):
                V[r, c1] += wt
    return H_arr, V_arr


cdef inline long _clampl(long v, long lo, long hi):
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


def density_add(rects, int m, int n, double cell_w, double cell_h):
    cdef double[:, ::1] R = np.ascontiguousarray(
        np.asarray(rects, dtype=np.float64).reshape(-1, 4)
    )
    out_arr = np.zeros((m, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double cell_area = cell_w * cell_h
    cdef Py_ssize_t k, r, c
    cdef long c0, c1, r0, r1
    cdef double x0, y0, x1, y1, ox, oy, ex0, ex1, ey0, ey1
    for k in range(R.shape[0]):
        x0 = R[k, 0]
        y0 = R[k, 1]
        x1 = R[k, 2]
        y1 = R[k, 3]
        c0 = _clampl(<long>floor(x0 / cell_w), 0, n - 1)
        c1 = _clampl(<long>ceil(x1 / cell_w) - 1, 0, n - 1)
        r0 = _clampl(<long>floor(y0 / cell_h), 0, m - 1)
        r1 = _clampl(<long>ceil(y1 / cell_h) - 1, 0, m - 1)
        for r in range(r0, r1 + 1):
            ey0 = r * cell_h
            ey1 = ey0 + cell_h
            oy = (y1 if y1 < ey1 else ey1) - (y0 if y0 > ey0 else ey0)
            if oy <= 0.0:
                continue
            for c in range(c0, c1 + 1):
                ex0 = c * cell_w
                ex1 = ex0 + cell_w
                ox = (x1 if x1 < ex1 else ex1) - (x0 if x0 > ex0 else ex0)
                if ox > 0.0:
                    out[r, c] += ox * oy / cell_area
    return out_arr


def feasibility_mask(
    int m,
    int n,
    double cell_w,
    double cell_h,
    double canvas_w,
    double canvas_h,
    double mw,
    double mh,
    soft,
    solids,
    double max_density,
):
    cdef double[:, ::1] S = np.ascontiguousarray(soft, dtype=np.float64)
    cdef double[:, ::1] SOL = np.ascontiguousarray(
        np.asarray(solids, dtype=np.float64).reshape(-1, 4)
    )
    mask_arr = np.zeros((m, n), dtype=np.uint8)
    cdef unsigned char[:, ::1] mask = mask_arr
    cdef double tol = _REL_EPS * (canvas_w + canvas_h)
    cdef double eps_len = _REL_EPS * (cell_w + cell_h)
    cdef double cell_area = cell_w * cell_h
    cdef double hw = mw / 2.0
    cdef double hh = mh / 2.0
    cdef Py_ssize_t r, c, s, rr, cc
    cdef long c0, c1, r0, r1, c_lo, c_hi, r_lo, r_hi, fc0, fc1, fr0, fr1
    cdef double cx, cy, x0, x1, y0, y1, ox, oy, ex0, ex1, ey0, ey1, frac
    cdef long total
    cdef bint ok

    # (1) on-canvas band of center cells (inclusive bounds, tolerance tol)
    c_lo = <long>ceil((hw - tol) / cell_w - 0.5 - _REL_EPS)
    c_hi = <long>floor((canvas_w - hw + tol) / cell_w - 0.5 + _REL_EPS)
    r_lo = <long>ceil((hh - tol) / cell_h - 0.5 - _REL_EPS)
    r_hi = <long>floor((canvas_h - hh + tol) / cell_h - 0.5 + _REL_EPS)
    if c_lo < 0:
        c_lo = 0
    if r_lo < 0:
        r_lo = 0
    if c_hi > n - 1:
        c_hi = n - 1
    if r_hi > m - 1:
        r_hi = m - 1
    if c_lo > c_hi or r_lo > r_hi:
        return mask_arr
    for r in range(r_lo, r_hi + 1):
        for c in range(c_lo, c_hi + 1):
            mask[r, c] = 1

    # (2) each solid forbids a rectangle of center cells (strict overlap)
    for s in range(SOL.shape[0]):
        fc0 = <long>floor((SOL[s, 0] - hw + eps_len) / cell_w - 0.5) + 1
        fc1 = <long>ceil((SOL[s, 2] + hw - eps_len) / cell_w - 0.5) - 1
        fr0 = <long>floor((SOL[s, 1] - hh + eps_len) / cell_h - 0.5) + 1
        fr1 = <long>ceil((SOL[s, 3] + hh - eps_len) / cell_h - 0.5) - 1
        fc0 = _clampl(fc0, 0, n)
        fr0 = _clampl(fr0, 0, m)
        if fc1 > n - 1:
            fc1 = n - 1
        if fr1 > m - 1:
            fr1 = m - 1
        for r in range(fr0, fr1 + 1):
            for c in range(fc0, fc1 + 1):
                mask[r, c] = 0

    # (3) density screening via a summed-area table of occupied cells
    sat_arr = np.zeros((m + 1, n + 1), dtype=np.int64)
    cdef long[:, ::1] sat = sat_arr
    for r in range(m):
        for c in range(n):
            sat[r + 1, c + 1] = (
                sat[r, c + 1] + sat[r + 1, c] - sat[r, c]
                + (1 if S[r, c] > 1e-12 else 0)
            )

    for r in range(r_lo, r_hi + 1):
        cy = (r + 0.5) * cell_h
        y0 = cy - hh
        y1 = cy + hh
        r0 = _clampl(<long>floor(y0 / cell_h + _REL_EPS), 0, m - 1)
        r1 = _clampl(<long>ceil(y1 / cell_h - _REL_EPS) - 1, 0, m - 1)
        for c in range(c_lo, c_hi + 1):
            if not mask[r, c]:
                continue
            cx = (c + 0.5) * cell_w
            x0 = cx - hw
            x1 = cx + hw
            c0 = _clampl(<long>floor(x0 / cell_w + _REL_EPS), 0, n - 1)
            c1 = _clampl(<long>ceil(x1 / cell_w - _REL_EPS) - 1, 0, n - 1)
            total = sat[r1 + 1, c1 + 1] - sat[r0, c1 + 1] - sat[r1 + 1, c0] + sat[r0, c0]
            if total == 0:
                continue
            ok = True
            for rr in range(r0, r1 + 1):
                ey0 = rr * cell_h
                ey1 = ey0 + cell_h
                oy = (y1 if y1 < ey1 else ey1) - (y0 if y0 > ey0 else ey0)
                if oy <= 0.0:
                    continue
                for cc in range(c0, c1 + 1):
                    if S[rr, cc] <= 1e-12:
                        continue
                    ex0 = cc * cell_w
                    ex1 = ex0 + cell_w
                    ox = (x1 if x1 < ex1 else ex1) - (x0 if x0 > ex0 else ex0)
                    if ox <= 0.0:
                        continue
                    frac = ox * oy / cell_area
                    if frac > 1e-12 and S[rr, cc] + frac > max_density + 1e-12:
                        ok = False
                        break
                if not ok:
                    break
            if not ok:
                mask[r, c] = 0
    return mask_arr


def fd_run(
    pos,
    half_w,
    half_h,
    movable,
    edge_a,
    edge_b,
    edge_w,
    jitter,
    int iterations,
    double max_move_start,
    double max_move_end,
    double step,
    double repulsion_scale,
    double repulsion_norm,
    double convergence_eps,
    double canvas_w,
    double canvas_h,
):
    pos_arr = np.array(pos, dtype=np.float64)
    cdef double[:, ::1] P = pos_arr
    cdef double[::1] HW = np.ascontiguousarray(half_w, dtype=np.float64)
    cdef double[::1] HH = np.ascontiguousarray(half_h, dtype=np.float64)
    cdef unsigned char[::1] MOV = np.ascontiguousarray(movable, dtype=np.uint8)
    cdef long[::1] EA = np.ascontiguousarray(edge_a, dtype=np.int64)
    cdef long[::1] EB = np.ascontiguousarray(edge_b, dtype=np.int64)
    cdef double[::1] EW = np.ascontiguousarray(edge_w, dtype=np.float64)
    cdef double[:, ::1] J = np.ascontiguousarray(jitter, dtype=np.float64)
    cdef Py_ssize_t K = P.shape[0]
    force_arr = np.zeros((K, 2), dtype=np.float64)
    new_arr = np.zeros((K, 2), dtype=np.float64)
    cdef double[:, ::1] F = force_arr
    cdef double[:, ::1] NP_ = new_arr
    cdef Py_ssize_t t, i, j, e, oi, oj, pos_k
    cdef long a, b, tmp
    cdef double frac, mm, dx, dy, w, ox, oy, mag, s, ddx, ddy, norm, nx, ny
    cdef double lo_x, hi_x, lo_y, hi_y, max_disp, disp, key, xmax_i
    cdef int iters_run = 0

    # sweep order over nodes with area, sorted by left edge; kept nearly
    # sorted across iterations so insertion sort stays ~O(K)
    cdef long[::1] order = np.array(
        [i for i in range(K) if HW[i] > 0.0 and HH[i] > 0.0], dtype=np.int64
    )
    cdef double[::1] left = np.zeros(order.shape[0], dtype=np.float64)
    cdef Py_ssize_t A = order.shape[0]

    for t in range(iterations):
        frac = t / (iterations - 1.0) if iterations > 1 else 0.0
        mm = max_move_start + (max_move_end - max_move_start) * frac
        for i in range(K):
            F[i, 0] = 0.0
            F[i, 1] = 0.0
        for e in range(EA.shape[0]):
            a = EA[e]
            b = EB[e]
            w = EW[e]
            dx = (P[b, 0] - P[a, 0]) * w
            dy = (P[b, 1] - P[a, 1]) * w
            if MOV[a]:
                F[a, 0] += dx
                F[a, 1] += dy
            if MOV[b]:
                F[b, 0] -= dx
                F[b, 1] -= dy
        if repulsion_scale > 0.0 and A > 1:
            # insertion sort by left edge (near-linear on almost-sorted input)
            for oi in range(A):
                left[oi] = P[order[oi], 0] - HW[order[oi]]
            for oi in range(1, A):
                tmp = order[oi]
                key = left[oi]
                oj = oi - 1
                while oj >= 0 and left[oj] > key:
                    left[oj + 1] = left[oj]
                    order[oj + 1] = order[oj]
                    oj -= 1
                left[oj + 1] = key
                order[oj + 1] = tmp
            for oi in range(A):
                i = order[oi]
                xmax_i = P[i, 0] + HW[i]
                for oj in range(oi + 1, A):
                    j = order[oj]
                    if left[oj] >= xmax_i:
                        break
                    if not (MOV[i] or MOV[j]):
                        continue
                    ox = (
                        (P[i, 0] + HW[i] if P[i, 0] + HW[i] < P[j, 0] + HW[j] else P[j, 0] + HW[j])
                        - (P[i, 0] - HW[i] if P[i, 0] - HW[i] > P[j, 0] - HW[j] else P[j, 0] - HW[j])
                    )
                    if ox <= 0.0:
                        continue
                    oy = (
                        (P[i, 1] + HH[i] if P[i, 1] + HH[i] < P[j, 1] + HH[j] else P[j, 1] + HH[j])
                        - (P[i, 1] - HH[i] if P[i, 1] - HH[i] > P[j, 1] - HH[j] else P[j, 1] - HH[j])
                    )
                    if oy <= 0.0:
                        continue
                    mag = repulsion_scale * ox * oy / repulsion_norm
                    if ox < oy:
                        s = P[i, 0] - P[j, 0]
                        if s == 0.0:
                            s = 1.0 if J[i, 0] >= 0 else -1.0
                        ddx = mag if s > 0 else -mag
                        ddy = 0.0
                    else:
                        s = P[i, 1] - P[j, 1]
                        if s == 0.0:
                            s = 1.0 if J[i, 1] >= 0 else -1.0
                        ddx = 0.0
                        ddy = mag if s > 0 else -mag
                    if MOV[i]:
                        F[i, 0] += ddx
                        F[i, 1] += ddy
                    if MOV[j]:
                        F[j, 0] -= ddx
                        F[j, 1] -= ddy
        max_disp = 0.0
        for i in range(K):
            if MOV[i]:
                ddx = step * F[i, 0]
                ddy = step * F[i, 1]
                norm = sqrt(ddx * ddx + ddy * ddy)
                if norm > mm and norm > 0.0:
                    ddx *= mm / norm
                    ddy *= mm / norm
                nx = P[i, 0] + ddx
                ny = P[i, 1] + ddy
                lo_x = HW[i] if HW[i] < canvas_w / 2.0 else canvas_w / 2.0
                hi_x = canvas_w - HW[i] if canvas_w - HW[i] > canvas_w / 2.0 else canvas_w / 2.0
                lo_y = HH[i] if HH[i] < canvas_h / 2.0 else canvas_h / 2.0
                hi_y = canvas_h - HH[i] if canvas_h - HH[i] > canvas_h / 2.0 else canvas_h / 2.0
                if nx < lo_x:
                    nx = lo_x
                if nx > hi_x:
                    nx = hi_x
                if ny < lo_y:
                    ny = lo_y
                if ny > hi_y:
                    ny = hi_y
                ddx = nx - P[i, 0]
                ddy = ny - P[i, 1]
                disp = sqrt(ddx * ddx + ddy * ddy)
                if disp > max_disp:
                    max_disp = disp
                NP_[i, 0] = nx
                NP_[i, 1] = ny
            else:
                NP_[i, 0] = P[i, 0]
                NP_[i, 1] = P[i, 1]
        for i in range(K):
            P[i, 0] = NP_[i, 0]
            P[i, 1] = NP_[i, 1]
        iters_run = t + 1
        if max_disp < convergence_eps:
            break
    return pos_arr, iters_run
