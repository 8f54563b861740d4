"""Exposure levels and per-segment hotspot identification.

Each sample on a segment is checked against its successor: when the next
sample on the same segment arrives less than ``gap_s`` later, the earlier
one counts as valid and its exposure level is tallied. A segment whose
valid samples fall on at least ``vms_days`` local calendar days is a valid
monitoring segment; it is a hotspot for a pollutant when the most frequent
level there is Unhealthy for Sensitive Groups or worse.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from ._io import atomic_open, write_csv
from .ingest import POLLUTANTS
from .reduction import DEFAULT_TZ_OFFSET_S, local_day

DEFAULT_GAP_S = 1800
DEFAULT_VMS_DAYS = 10


class ExposureLevel(IntEnum):
    GOOD = 1
    MODERATE = 2
    UNHEALTHY_SENSITIVE = 3
    UNHEALTHY = 4

    @property
    def label(self):
        return _LABELS[self]


_LABELS = {
    ExposureLevel.GOOD: "Good",
    ExposureLevel.MODERATE: "Moderate",
    ExposureLevel.UNHEALTHY_SENSITIVE: "Unhealthy for Sensitive Groups",
    ExposureLevel.UNHEALTHY: "Unhealthy",
}

# inclusive upper bound of each level, Good..Unhealthy
LEVEL_THRESHOLDS = {
    "no2": (50.0, 100.0, 150.0, 200.0),  # ppb
    "pm25": (9.0, 35.4, 55.4, 125.4),  # ug/m3
    "pm10": (54.0, 154.0, 254.0, 354.0),  # ug/m3
}


def _bounds(pollutant):
    try:
        return LEVEL_THRESHOLDS[pollutant]
    except KeyError:
        raise ValueError(f"unknown pollutant {pollutant!r}") from None


def get_level(value: float, pollutant: str) -> ExposureLevel:
    """Level whose range contains ``value``; above the table clamps to Unhealthy."""
    bounds = _bounds(pollutant)
    if not math.isfinite(value) or value < 0:
        raise ValueError(f"concentration must be finite and non-negative, got {value}")
    for level, upper in zip(ExposureLevel, bounds):
        if value <= upper:
            return level
    return ExposureLevel.UNHEALTHY


def level_overflow(value: float, pollutant: str) -> bool:
    """True when ``value`` lies above the top of the table."""
    return value > _bounds(pollutant)[-1]


def levels(values, pollutant: str) -> np.ndarray:
    """Vectorised :func:`get_level`, returning levels 1..4 as int8."""
    v = np.asarray(values, dtype=float)
    if np.any(~np.isfinite(v) | (v < 0)):
        raise ValueError("concentrations must be finite and non-negative")
    idx = np.searchsorted(np.asarray(_bounds(pollutant)), v, side="left")
    return (np.minimum(idx, 3) + 1).astype(np.int8)


def mark_valid(timestamps, gap_s: float = DEFAULT_GAP_S) -> np.ndarray:
    """Sample j is valid iff sample j+1 follows it by less than ``gap_s``.

    The last sample has no successor and is never valid.
    """
    t = np.asarray(timestamps)
    d = np.diff(t)
    if np.any(d < 0):
        raise ValueError("samples must be sorted by timestamp")
    valid = np.zeros(t.size, dtype=bool)
    valid[:-1] = d < gap_s
    return valid


@dataclass(frozen=True)
class HotspotResult:
    segment_id: int
    counters: dict  # pollutant -> (good, moderate, usg, unhealthy)
    dominant_level: dict  # pollutant -> ExposureLevel or None
    valid_days: int
    is_vms: bool
    is_hotspot: dict  # pollutant -> bool

    @property
    def n_valid(self):
        return sum(self.counters[POLLUTANTS[0]])


def _dominant(c):
    if not any(c):
        return None
    # ties go to the more severe level
    rev = list(reversed(c))
    return ExposureLevel(4 - rev.index(max(rev)))


def _classify(seg, ts, conc, gap_s, vms_days, tz_offset_s, weighting):
    """Shared core: arrays for many segments in, sorted HotspotResults out."""
    if weighting not in ("count", "duration"):
        raise ValueError("weighting must be 'count' or 'duration'")
    seg = np.asarray(seg, dtype=np.int64)
    ts = np.asarray(ts, dtype=np.int64)
    if seg.size == 0:
        return []
    conc = [np.asarray(conc[p], dtype=float) for p in POLLUTANTS]
    # values as trailing keys make the order independent of input order
    order = np.lexsort((conc[2], conc[0], conc[1], ts, seg))
    seg, ts = seg[order], ts[order]
    conc = [c[order] for c in conc]

    new = np.ones(seg.size, dtype=bool)
    new[1:] = seg[1:] != seg[:-1]
    gid = np.cumsum(new) - 1
    n = int(gid[-1]) + 1

    same_next = np.zeros(seg.size, dtype=bool)
    same_next[:-1] = ~new[1:]
    gap = np.zeros(seg.size, dtype=np.int64)
    gap[:-1] = ts[1:] - ts[:-1]
    valid = same_next & (gap < gap_s)
    weight = gap[valid].astype(float) if weighting == "duration" else None

    counters = []
    for p, c in zip(POLLUTANTS, conc):
        lvl = levels(c[valid], p).astype(np.int64) - 1
        tally = np.bincount(gid[valid] * 4 + lvl, weights=weight, minlength=n * 4).reshape(n, 4)
        counters.append(tally if weighting == "duration" else tally.astype(np.int64))

    day = local_day(ts, tz_offset_s)
    vd = np.unique(gid[valid] * (1 << 32) + day[valid])
    valid_days = np.bincount(vd >> 32, minlength=n) if vd.size else np.zeros(n, np.int64)

    out = []
    seg_ids = seg[new].tolist()
    for g, sid in enumerate(seg_ids):
        cnt = {p: tuple(c[g].tolist()) for p, c in zip(POLLUTANTS, counters)}
        dom = {p: _dominant(cnt[p]) for p in POLLUTANTS}
        vms = bool(valid_days[g] >= vms_days)
        hot = {p: vms and dom[p] is not None and dom[p] >= ExposureLevel.UNHEALTHY_SENSITIVE for p in POLLUTANTS}
        out.append(HotspotResult(sid, cnt, dom, int(valid_days[g]), vms, hot))
    return out


def classify_segment(
    timestamps,
    concentrations,
    segment_id: int = 0,
    gap_s: float = DEFAULT_GAP_S,
    vms_days: int = DEFAULT_VMS_DAYS,
    tz_offset_s: int = DEFAULT_TZ_OFFSET_S,
    weighting: str = "count",
) -> HotspotResult:
    """Run the hotspot rule on one segment's time-sorted samples.

    ``concentrations`` maps each pollutant name to an array aligned with
    ``timestamps``. ``weighting="duration"`` tallies the gap to the next
    sample in seconds instead of one per valid sample.
    """
    ts = np.asarray(timestamps, dtype=np.int64)
    if np.any(np.diff(ts) < 0):
        raise ValueError("samples must be sorted by timestamp")
    if ts.size == 0:
        zero = {p: (0, 0, 0, 0) for p in POLLUTANTS}
        return HotspotResult(segment_id, zero, dict.fromkeys(POLLUTANTS), 0, False, dict.fromkeys(POLLUTANTS, False))
    seg = np.full(ts.size, segment_id, dtype=np.int64)
    return _classify(seg, ts, concentrations, gap_s, vms_days, tz_offset_s, weighting)[0]


def identify_hotspots(
    snapped,
    gap_s: float = DEFAULT_GAP_S,
    vms_days: int = DEFAULT_VMS_DAYS,
    tz_offset_s: int = DEFAULT_TZ_OFFSET_S,
    weighting: str = "count",
) -> list[HotspotResult]:
    """One result per segment that has samples, ordered by segment id."""
    conc = {p: snapped.obs.pollutant(p) for p in POLLUTANTS}
    return _classify(snapped.segment_id, snapped.obs.timestamp, conc, gap_s, vms_days, tz_offset_s, weighting)


# --- outputs --------------------------------------------------------------

HOTSPOT_HEADER = (
    "segment_id", "pollutant", "dominant_level", "n_good", "n_moderate", "n_usg", "n_unhealthy",
    "valid_days", "is_vms", "is_hotspot",
)


def _n(x):
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def write_hotspots_csv(path, results):
    rows = []
    for r in results:
        for p in POLLUTANTS:
            dom = r.dominant_level[p]
            rows.append(
                [r.segment_id, p, int(dom) if dom else 0, *(_n(c) for c in r.counters[p]),
                 r.valid_days, int(r.is_vms), int(r.is_hotspot[p])]
            )
    write_csv(path, HOTSPOT_HEADER, rows)


def write_hotspots_geojson(path, network, results):
    feats = []
    for r in results:
        seg = network.segments[r.segment_id]
        props = {"segment_id": r.segment_id, "road_class": seg.road_class, "valid_days": r.valid_days, "is_vms": r.is_vms}
        for p in POLLUTANTS:
            dom = r.dominant_level[p]
            props[f"{p}_level"] = int(dom) if dom else None
            props[f"{p}_label"] = dom.label if dom else None
            props[f"{p}_hotspot"] = r.is_hotspot[p]
        feats.append(
            {
                "type": "Feature",
                "geometry": {"type": "LineString", "coordinates": network.geo_coords(seg).tolist()},
                "properties": props,
            }
        )
    with atomic_open(path) as fh:
        json.dump({"type": "FeatureCollection", "features": feats}, fh)
        fh.write("\n")
