"""Pure numpy nearest-segment kernel, used when the extension is missing.

Same contract as the compiled ``_csnap.snap_points``: returns segment ids
(-1 where nothing lies within ``max_dist``) and distances (inf there).
The arithmetic follows the compiled loop step by step so results agree
exactly.
"""

from __future__ import annotations

import numpy as np

_CHUNK = 8192


def _expand(counts):
    """For counts [2, 0, 3] return owner [0, 0, 2, 2, 2] and rank [0, 1, 0, 1, 2]."""
    owner = np.repeat(np.arange(len(counts)), counts)
    starts = np.cumsum(counts) - counts
    rank = np.arange(owner.size) - starts[owner]
    return owner, rank


def _snap_chunk(px, py, max_dist, x0, y0, cs, nx, ny, cell_ptr, cell_items, seg_ptr, vx, vy):
    n = px.size
    ids = np.full(n, -1, dtype=np.int64)
    dists = np.full(n, np.inf)
    r = max_dist * (1.0 + 1e-9) + 1e-9

    ok = np.isfinite(px) & np.isfinite(py)
    with np.errstate(invalid="ignore"):
        ix_lo = np.floor((px - r - x0) / cs)
        ix_hi = np.floor((px + r - x0) / cs)
        iy_lo = np.floor((py - r - y0) / cs)
        iy_hi = np.floor((py + r - y0) / cs)
    ok &= (ix_hi >= 0) & (iy_hi >= 0) & (ix_lo < nx) & (iy_lo < ny)
    pts = np.nonzero(ok)[0]
    if pts.size == 0:
        return ids, dists
    ix_lo = np.clip(ix_lo[pts], 0, nx - 1).astype(np.int64)
    ix_hi = np.clip(ix_hi[pts], 0, nx - 1).astype(np.int64)
    iy_lo = np.clip(iy_lo[pts], 0, ny - 1).astype(np.int64)
    iy_hi = np.clip(iy_hi[pts], 0, ny - 1).astype(np.int64)
    wx = ix_hi - ix_lo + 1
    ncell = wx * (iy_hi - iy_lo + 1)

    # (point, cell) pairs
    q, k = _expand(ncell)
    cell = (iy_lo[q] + k // wx[q]) * nx + (ix_lo[q] + k % wx[q])
    # (point, segment) pairs
    cnt = cell_ptr[cell + 1] - cell_ptr[cell]
    pc, k = _expand(cnt)
    q = q[pc]
    seg = cell_items[cell_ptr[cell[pc]] + k]
    if seg.size == 0:
        return ids, dists
    # (point, segment, piece) triples; pieces of one pair are contiguous
    npiece = seg_ptr[seg + 1] - seg_ptr[seg] - 1
    pair, k = _expand(npiece)
    v = seg_ptr[seg[pair]] + k
    qx = px[pts[q[pair]]]
    qy = py[pts[q[pair]]]

    ax = vx[v]
    ay = vy[v]
    dx = vx[v + 1] - ax
    dy = vy[v + 1] - ay
    l2 = dx * dx + dy * dy
    pos = l2 > 0.0
    t = np.zeros_like(l2)
    t[pos] = ((qx[pos] - ax[pos]) * dx[pos] + (qy[pos] - ay[pos]) * dy[pos]) / l2[pos]
    t = np.where(t < 0.0, 0.0, np.where(t > 1.0, 1.0, t))
    ex = qx - (ax + t * dx)
    ey = qy - (ay + t * dy)
    d2 = ex * ex + ey * ey

    starts = np.cumsum(npiece) - npiece
    d = np.sqrt(np.minimum.reduceat(d2, starts))

    # best per point: smallest distance, then smallest id
    order = np.lexsort((seg, d, q))
    first = np.ones(order.size, dtype=bool)
    first[1:] = q[order[1:]] != q[order[:-1]]
    win = order[first]
    hit = d[win] <= max_dist
    win = win[hit]
    ids[pts[q[win]]] = seg[win]
    dists[pts[q[win]]] = d[win]
    return ids, dists


def snap_points(px, py, max_dist, x0, y0, cell_size, nx, ny, cell_ptr, cell_items, seg_ptr, vx, vy):
    px = np.asarray(px, dtype=np.float64)
    py = np.asarray(py, dtype=np.float64)
    ids = np.empty(px.size, dtype=np.int64)
    dists = np.empty(px.size, dtype=np.float64)
    for a in range(0, px.size, _CHUNK):
        b = a + _CHUNK
        ids[a:b], dists[a:b] = _snap_chunk(
            px[a:b], py[a:b], max_dist, x0, y0, cell_size, nx, ny, cell_ptr, cell_items, seg_ptr, vx, vy
        )
    return ids, dists
