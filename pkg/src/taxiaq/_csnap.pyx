# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled nearest-segment kernel.

Mirrors ``taxiaq._pysnap.snap_points`` operation for operation so both
produce bit-identical distances.
"""

import numpy as np

from libc.math cimport sqrt, floor, INFINITY, isfinite


cdef inline double _seg_dist(double px, double py, long long s,
                             const long long[::1] seg_ptr,
                             const double[::1] vx, const double[::1] vy) noexcept nogil:
    cdef long long v
    cdef double ax, ay, dx, dy, l2, t, cx, cy, ex, ey, d2
    cdef double best = INFINITY
    for v in range(seg_ptr[s], seg_ptr[s + 1] - 1):
        ax = vx[v]
        ay = vy[v]
        dx = vx[v + 1] - ax
        dy = vy[v + 1] - ay
        l2 = dx * dx + dy * dy
        if l2 > 0.0:
            t = ((px - ax) * dx + (py - ay) * dy) / l2
            if t < 0.0:
                t = 0.0
            elif t > 1.0:
                t = 1.0
        else:
            t = 0.0
        cx = ax + t * dx
        cy = ay + t * dy
        ex = px - cx
        ey = py - cy
        d2 = ex * ex + ey * ey
        if d2 < best:
            best = d2
    return sqrt(best)


def snap_points(const double[::1] px, const double[::1] py, double max_dist,
                double x0, double y0, double cell_size, long long nx, long long ny,
                const long long[::1] cell_ptr, const long long[::1] cell_items,
                const long long[::1] seg_ptr, const double[::1] vx, const double[::1] vy):
    cdef Py_ssize_t n = px.shape[0]
    ids_arr = np.full(n, -1, dtype=np.int64)
    dist_arr = np.full(n, np.inf, dtype=np.float64)
    cdef long long[::1] ids = ids_arr
    cdef double[::1] dists = dist_arr
    cdef Py_ssize_t i
    cdef long long ix_lo, ix_hi, iy_lo, iy_hi, ix, iy, c, k, s, best_id
    cdef double x, y, r, d, best_d
    r = max_dist * (1.0 + 1e-9) + 1e-9

    with nogil:
        for i in range(n):
            x = px[i]
            y = py[i]
            if not (isfinite(x) and isfinite(y)):
                continue
            ix_lo = <long long>floor((x - r - x0) / cell_size)
            ix_hi = <long long>floor((x + r - x0) / cell_size)
            iy_lo = <long long>floor((y - r - y0) / cell_size)
            iy_hi = <long long>floor((y + r - y0) / cell_size)
            if ix_hi < 0 or iy_hi < 0 or ix_lo >= nx or iy_lo >= ny:
                continue
            if ix_lo < 0:
                ix_lo = 0
            if iy_lo < 0:
                iy_lo = 0
            if ix_hi >= nx:
                ix_hi = nx - 1
            if iy_hi >= ny:
                iy_hi = ny - 1
            best_d = INFINITY
            best_id = -1
            for iy in range(iy_lo, iy_hi + 1):
                for ix in range(ix_lo, ix_hi + 1):
                    c = iy * nx + ix
                    for k in range(cell_ptr[c], cell_ptr[c + 1]):
                        s = cell_items[k]
                        d = _seg_dist(x, y, s, seg_ptr, vx, vy)
                        if d < best_d or (d == best_d and s < best_id):
                            best_d = d
                            best_id = s
            if best_id >= 0 and best_d <= max_dist:
                ids[i] = best_id
                dists[i] = best_d
    return ids_arr, dist_arr
