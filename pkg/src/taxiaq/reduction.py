"""Snapping observations to segments and reducing them to median estimates."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._io import atomic_open, fmt, write_csv
from .ingest import POLLUTANTS, Observation, ObservationBatch
from .spatial import DEFAULT_MAX_SNAP_M

DEFAULT_TZ_OFFSET_S = 8 * 3600
HOUR_S = 3600
DAY_S = 86400

ESTIMATE_HEADER = ("segment_id", "hour_start", "no2_ppb", "pm25_ugm3", "pm10_ugm3", "n_no2", "n_pm25", "n_pm10")
SUMMARY_HEADER = ("segment_id", "no2_ppb", "pm25_ugm3", "pm10_ugm3", "distinct_days", "hours_with_data")


def median(values) -> float:
    """Exact median; even counts give the mean of the two middle values."""
    s = sorted(values)
    n = len(s)
    if n == 0:
        raise ValueError("median of empty sequence")
    mid = n // 2
    if n % 2:
        return s[mid]
    return (s[mid - 1] + s[mid]) / 2


def local_hour_start(ts, tz_offset_s=DEFAULT_TZ_OFFSET_S):
    """Start of the local clock hour containing ``ts``, as UTC epoch seconds."""
    return (np.asarray(ts, dtype=np.int64) + tz_offset_s) // HOUR_S * HOUR_S - tz_offset_s


def local_day(ts, tz_offset_s=DEFAULT_TZ_OFFSET_S):
    """Local calendar day number (days since 1970-01-01 local)."""
    return (np.asarray(ts, dtype=np.int64) + tz_offset_s) // DAY_S


@dataclass(frozen=True)
class SnappedObservation:
    segment_id: int
    snap_distance_m: float
    observation: Observation


@dataclass(eq=False)
class SnappedBatch:
    obs: ObservationBatch
    segment_id: np.ndarray
    snap_distance_m: np.ndarray

    def __len__(self):
        return int(self.segment_id.size)

    def records(self):
        for sid, d, o in zip(self.segment_id.tolist(), self.snap_distance_m.tolist(), self.obs.records()):
            yield SnappedObservation(sid, d, o)


def snap_observations(obs: ObservationBatch, index, projection, max_snap_m=DEFAULT_MAX_SNAP_M, workers=1, kernel=None):
    """Attach each observation to its nearest segment within ``max_snap_m``.

    Returns ``(SnappedBatch, n_rejected)``; kept rows stay in input order.
    """
    x, y = projection.forward(obs.lat, obs.lon)
    ids, dist = index.nearest_many(x, y, max_snap_m, workers=workers, kernel=kernel)
    keep = ids >= 0
    return SnappedBatch(obs.take(keep), ids[keep], dist[keep]), int(np.count_nonzero(~keep))


# --- hourly medians -------------------------------------------------------


def _group_medians(gid, values, n_groups):
    """Median and count of ``values`` per group id, ignoring NaN."""
    ok = ~np.isnan(values)
    g = gid[ok]
    v = values[ok]
    order = np.lexsort((v, g))
    g = g[order]
    v = v[order]
    counts = np.bincount(g, minlength=n_groups)
    starts = np.cumsum(counts) - counts
    med = np.full(n_groups, np.nan)
    has = counts > 0
    lo = starts[has] + (counts[has] - 1) // 2
    hi = starts[has] + counts[has] // 2
    med[has] = (v[lo] + v[hi]) / 2
    return med, counts


def _aggregate(seg, hour, cols):
    order = np.lexsort((hour, seg))
    s, h = seg[order], hour[order]
    new = np.ones(s.size, dtype=bool)
    new[1:] = (s[1:] != s[:-1]) | (h[1:] != h[:-1])
    gid_sorted = np.cumsum(new) - 1
    gid = np.empty_like(gid_sorted)
    gid[order] = gid_sorted
    n_groups = int(gid_sorted[-1]) + 1 if s.size else 0
    meds, counts = [], []
    for v in cols:
        m, c = _group_medians(gid, v, n_groups)
        meds.append(m)
        counts.append(c)
    return s[new], h[new], np.stack(meds) if meds else None, np.stack(counts) if counts else None


@dataclass(eq=False)
class HourlyEstimates:
    """Per (segment, local hour) medians; rows sorted by segment then hour.

    ``median`` and ``count`` are ``(3, n)`` arrays in POLLUTANTS order.
    """

    segment_id: np.ndarray
    hour_start: np.ndarray
    median: np.ndarray
    count: np.ndarray
    tz_offset_s: int = DEFAULT_TZ_OFFSET_S

    def __len__(self):
        return int(self.segment_id.size)

    def rows(self):
        for i in range(len(self)):
            yield SegmentHourEstimate(
                int(self.segment_id[i]),
                int(self.hour_start[i]),
                {p: float(self.median[k, i]) for k, p in enumerate(POLLUTANTS)},
                {p: int(self.count[k, i]) for k, p in enumerate(POLLUTANTS)},
            )


@dataclass(frozen=True)
class SegmentHourEstimate:
    segment_id: int
    hour_start: int
    median: dict
    sample_count: dict


def _split_by_segment(seg, parts):
    """Disjoint contiguous segment-id ranges holding roughly equal row counts."""
    if parts <= 1 or seg.size == 0:
        return [np.arange(seg.size)]
    order = np.argsort(seg, kind="stable")
    s = seg[order]
    cuts = [0]
    for k in range(1, parts):
        c = int(np.searchsorted(s, s[min(k * s.size // parts, s.size - 1)], side="left"))
        if c > cuts[-1]:
            cuts.append(c)
    cuts.append(s.size)
    return [order[a:b] for a, b in zip(cuts[:-1], cuts[1:]) if b > a]


def aggregate_hourly(snapped: SnappedBatch, tz_offset_s: int = DEFAULT_TZ_OFFSET_S, workers: int = 1) -> HourlyEstimates:
    """Median per pollutant for every (segment, local clock hour) with data.

    Workers own disjoint segment-id ranges; the concatenated result is the
    same for any worker count.
    """
    seg = np.asarray(snapped.segment_id, dtype=np.int64)
    hour = local_hour_start(snapped.obs.timestamp, tz_offset_s)
    cols = [snapped.obs.pollutant(p) for p in POLLUTANTS]
    if seg.size == 0:
        return HourlyEstimates(
            np.empty(0, np.int64), np.empty(0, np.int64),
            np.empty((3, 0)), np.empty((3, 0), np.int64), tz_offset_s,
        )

    def run(idx):
        return _aggregate(seg[idx], hour[idx], [c[idx] for c in cols])

    parts = _split_by_segment(seg, workers)
    if len(parts) == 1:
        results = [_aggregate(seg, hour, cols)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, parts))
        results.sort(key=lambda r: int(r[0][0]))
    return HourlyEstimates(
        np.concatenate([r[0] for r in results]),
        np.concatenate([r[1] for r in results]),
        np.concatenate([r[2] for r in results], axis=1),
        np.concatenate([r[3] for r in results], axis=1),
        tz_offset_s,
    )


# --- long-term summaries --------------------------------------------------


@dataclass(eq=False)
class SegmentSummaries:
    segment_id: np.ndarray
    median: np.ndarray  # (3, n) median of hourly medians
    distinct_days: np.ndarray
    hours_with_data: np.ndarray

    def __len__(self):
        return int(self.segment_id.size)

    def as_dict(self):
        return {
            int(s): {
                **{p: float(self.median[k, i]) for k, p in enumerate(POLLUTANTS)},
                "distinct_days": int(self.distinct_days[i]),
                "hours_with_data": int(self.hours_with_data[i]),
            }
            for i, s in enumerate(self.segment_id.tolist())
        }


def summarize_segments(est: HourlyEstimates) -> SegmentSummaries:
    """Long-term median of the hourly medians, plus coverage counts."""
    if len(est) == 0:
        raise ValueError("no hourly estimates to summarize")
    seg = est.segment_id
    new = np.ones(seg.size, dtype=bool)
    new[1:] = seg[1:] != seg[:-1]
    gid = np.cumsum(new) - 1
    n = int(gid[-1]) + 1
    meds = np.stack([_group_medians(gid, est.median[k], n)[0] for k in range(len(POLLUTANTS))])
    hours = np.bincount(gid, minlength=n)

    day = local_day(est.hour_start, est.tz_offset_s)
    first_of_day = np.ones(seg.size, dtype=bool)
    first_of_day[1:] = new[1:] | (day[1:] != day[:-1])  # rows are hour-sorted within a segment
    days = np.bincount(gid[first_of_day], minlength=n)
    return SegmentSummaries(seg[new], meds, days, hours)


# --- writers --------------------------------------------------------------


def write_estimates_csv(path, est: HourlyEstimates):
    med = [[fmt(v) for v in est.median[k].tolist()] for k in range(3)]
    cnt = est.count.tolist()
    rows = (
        (s, h, med[0][i], med[1][i], med[2][i], cnt[0][i], cnt[1][i], cnt[2][i])
        for i, (s, h) in enumerate(zip(est.segment_id.tolist(), est.hour_start.tolist()))
    )
    write_csv(path, ESTIMATE_HEADER, rows)


def write_summaries_csv(path, summ: SegmentSummaries):
    med = [[fmt(v) for v in summ.median[k].tolist()] for k in range(3)]
    rows = (
        (s, med[0][i], med[1][i], med[2][i], d, h)
        for i, (s, d, h) in enumerate(
            zip(summ.segment_id.tolist(), summ.distinct_days.tolist(), summ.hours_with_data.tolist())
        )
    )
    write_csv(path, SUMMARY_HEADER, rows)


def _num(x):
    x = float(x)
    return None if x != x else x


def write_summaries_geojson(path, network, summ: SegmentSummaries):
    feats = []
    for i, sid in enumerate(summ.segment_id.tolist()):
        seg = network.segments[sid]
        feats.append(
            {
                "type": "Feature",
                "geometry": {"type": "LineString", "coordinates": network.geo_coords(seg).tolist()},
                "properties": {
                    "segment_id": sid,
                    "road_class": seg.road_class,
                    "no2_ppb": _num(summ.median[0, i]),
                    "pm25_ugm3": _num(summ.median[1, i]),
                    "pm10_ugm3": _num(summ.median[2, i]),
                    "distinct_days": int(summ.distinct_days[i]),
                    "hours_with_data": int(summ.hours_with_data[i]),
                },
            }
        )
    with atomic_open(path) as fh:
        json.dump({"type": "FeatureCollection", "features": feats}, fh)
        fh.write("\n")
