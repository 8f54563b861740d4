"""Uniform-grid index over road segments for nearest-segment queries."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .geo import PlanarPoint
from .kernels import get_snap_kernel

DEFAULT_CELL_M = 100.0
DEFAULT_MAX_SNAP_M = 100.0
# points per work unit; fixed so results never depend on the worker count
BATCH_POINTS = 1 << 16


@dataclass(frozen=True, eq=False)
class SegmentIndex:
    """Immutable grid of candidate segments, stored CSR-style.

    A segment is listed in every cell its bounding box touches; queries scan
    every cell within ``max_dist`` of the point, so nothing closer than
    ``max_dist`` can be missed. Safe to share between threads.
    """

    cell_size: float
    x0: float
    y0: float
    nx: int
    ny: int
    cell_ptr: np.ndarray
    cell_items: np.ndarray
    seg_ptr: np.ndarray
    vx: np.ndarray
    vy: np.ndarray

    @property
    def n_segments(self) -> int:
        return len(self.seg_ptr) - 1

    @property
    def bbox(self):
        return float(self.vx.min()), float(self.vy.min()), float(self.vx.max()), float(self.vy.max())

    def cells_of(self, segment_id: int) -> list[int]:
        hits = np.nonzero(self.cell_items == segment_id)[0]
        return sorted(set(np.searchsorted(self.cell_ptr, hits, side="right") - 1))

    def _args(self):
        return (
            self.x0, self.y0, self.cell_size, self.nx, self.ny,
            self.cell_ptr, self.cell_items, self.seg_ptr, self.vx, self.vy,
        )

    def nearest_many(self, xs, ys, max_dist_m=DEFAULT_MAX_SNAP_M, workers=1, kernel=None):
        """Vectorised nearest-segment lookup.

        Returns ``(ids, dists)``; ids are -1 (and dists inf) where no segment
        lies within ``max_dist_m``.
        """
        if not max_dist_m > 0:
            raise ValueError("max_dist_m must be positive")
        fn = get_snap_kernel(kernel)
        xs = np.ascontiguousarray(xs, dtype=np.float64)
        ys = np.ascontiguousarray(ys, dtype=np.float64)
        args = (float(max_dist_m),) + self._args()
        bounds = [(a, min(a + BATCH_POINTS, xs.size)) for a in range(0, xs.size, BATCH_POINTS)]

        def run(ab):
            a, b = ab
            return fn(xs[a:b], ys[a:b], *args)

        if workers <= 1 or len(bounds) <= 1:
            parts = [run(ab) for ab in bounds]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(run, bounds))
        if not parts:
            return np.empty(0, dtype=np.int64), np.empty(0)
        return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def build_index(segments, cell_size_m: float = DEFAULT_CELL_M) -> SegmentIndex:
    if not segments:
        raise ValueError("cannot index an empty segment list")
    if not cell_size_m > 0:
        raise ValueError("cell_size_m must be positive")
    ids = [s.segment_id for s in segments]
    if ids != list(range(len(segments))):
        raise ValueError("segment ids must be dense and in order")

    counts = np.array([len(s.polyline) for s in segments], dtype=np.int64)
    seg_ptr = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)
    verts = np.vstack([s.polyline for s in segments]).astype(np.float64)
    if not np.all(np.isfinite(verts)):
        raise ValueError("non-finite segment coordinates")
    vx = np.ascontiguousarray(verts[:, 0])
    vy = np.ascontiguousarray(verts[:, 1])

    x0, y0 = float(vx.min()), float(vy.min())
    nx = int(math.floor((vx.max() - x0) / cell_size_m)) + 1
    ny = int(math.floor((vy.max() - y0) / cell_size_m)) + 1

    cells, items = [], []
    for sid, s in enumerate(segments):
        a, b = seg_ptr[sid], seg_ptr[sid + 1]
        ix0 = int(math.floor((vx[a:b].min() - x0) / cell_size_m))
        ix1 = int(math.floor((vx[a:b].max() - x0) / cell_size_m))
        iy0 = int(math.floor((vy[a:b].min() - y0) / cell_size_m))
        iy1 = int(math.floor((vy[a:b].max() - y0) / cell_size_m))
        for iy in range(iy0, iy1 + 1):
            for ix in range(ix0, ix1 + 1):
                cells.append(iy * nx + ix)
                items.append(sid)
    cells = np.asarray(cells, dtype=np.int64)
    items = np.asarray(items, dtype=np.int64)
    order = np.lexsort((items, cells))
    cells, items = cells[order], items[order]
    cell_ptr = np.zeros(nx * ny + 1, dtype=np.int64)
    np.add.at(cell_ptr, cells + 1, 1)
    cell_ptr = np.cumsum(cell_ptr)

    return SegmentIndex(
        cell_size=float(cell_size_m), x0=x0, y0=y0, nx=nx, ny=ny,
        cell_ptr=cell_ptr, cell_items=items, seg_ptr=seg_ptr, vx=vx, vy=vy,
    )


def nearest_segment(index: SegmentIndex, p: PlanarPoint, max_dist_m: float = DEFAULT_MAX_SNAP_M):
    """Nearest segment to ``p`` as ``(segment_id, distance_m)``, or None."""
    ids, d = index.nearest_many([p.x], [p.y], max_dist_m)
    if ids[0] < 0:
        return None
    return int(ids[0]), float(d[0])
