"""Mobile vs fixed-station agreement inside station buffers."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass

import numpy as np

from ._io import fmt, write_csv
from .geo import GeoPoint, Projection
from .ingest import POLLUTANTS, ObservationBatch
from .reduction import DEFAULT_TZ_OFFSET_S, local_hour_start, median

DEFAULT_BUFFER_M = 500.0
STATION_HEADER = ("station_id", "lat", "lon", "hour_start", "no2_ppb", "pm25_ugm3", "pm10_ugm3")

# agreement bands; a report outside them is annotated, not rejected
FB_BAND = 0.5
NMSE_MAX = 0.5
VG_MAX = 1.3
FAC2_MIN = 0.8


@dataclass(frozen=True)
class StationRecord:
    station_id: str
    location: GeoPoint
    hour_start: int
    no2: float
    pm25: float
    pm10: float

    def value(self, pollutant):
        return getattr(self, pollutant)


@dataclass(frozen=True)
class HourPair:
    station_id: str
    hour_start: int
    pollutant: str
    mobile: float
    fixed: float
    n_mobile: int


@dataclass(frozen=True)
class MetricReport:
    station_id: str
    pollutant: str
    n_pairs: int
    fb: float | None
    nmse: float | None
    vg: float | None
    r: float | None
    fac2: float | None
    er_median: float | None
    er_q25: float | None
    er_q75: float | None
    n_excluded_nonpositive: int

    @property
    def fb_pass(self):
        return self.fb is not None and -FB_BAND < self.fb < FB_BAND

    @property
    def nmse_pass(self):
        return self.nmse is not None and self.nmse < NMSE_MAX

    @property
    def vg_pass(self):
        return self.vg is not None and self.vg <= VG_MAX

    @property
    def fac2_pass(self):
        return self.fac2 is not None and self.fac2 >= FAC2_MIN

    def flags(self):
        return {"fb_pass": self.fb_pass, "nmse_pass": self.nmse_pass, "vg_pass": self.vg_pass, "fac2_pass": self.fac2_pass}


def pair_buffer_hours(
    obs: ObservationBatch,
    stations,
    projection: Projection,
    radius_m: float = DEFAULT_BUFFER_M,
    tz_offset_s: int = DEFAULT_TZ_OFFSET_S,
) -> list[HourPair]:
    """Pair station hours with the median of mobile samples in the buffer.

    Only hours where both sides have a finite value for the pollutant are
    kept. Station records are matched on the local-hour start of their
    ``hour_start``.
    """
    if len(obs) == 0 or not stations:
        return []
    ox, oy = projection.forward(obs.lat, obs.lon)
    ohour = local_hour_start(obs.timestamp, tz_offset_s)

    by_station: dict[str, dict[int, StationRecord]] = {}
    for rec in stations:
        by_station.setdefault(rec.station_id, {})[int(local_hour_start(rec.hour_start, tz_offset_s))] = rec

    pairs = []
    for sid in sorted(by_station):
        hours = by_station[sid]
        loc = next(iter(hours.values())).location
        sx, sy = projection.forward(loc.lat, loc.lon)
        inside = np.hypot(ox - sx, oy - sy) <= radius_m
        if not inside.any():
            continue
        idx = np.nonzero(inside)[0]
        h = ohour[idx]
        order = np.argsort(h, kind="stable")
        idx, h = idx[order], h[order]
        uniq, starts = np.unique(h, return_index=True)
        ends = np.append(starts[1:], h.size)
        for hour, a, b in zip(uniq.tolist(), starts.tolist(), ends.tolist()):
            rec = hours.get(hour)
            if rec is None:
                continue
            rows = idx[a:b]
            for p in POLLUTANTS:
                fixed = rec.value(p)
                vals = obs.pollutant(p)[rows]
                vals = vals[np.isfinite(vals)]
                if vals.size == 0 or not math.isfinite(fixed):
                    continue
                pairs.append(HourPair(sid, hour, p, float(median(vals.tolist())), float(fixed), int(vals.size)))
    return pairs


def compute_metrics(pairs) -> MetricReport:
    """Agreement statistics for one station and pollutant.

    Mobile values play the prediction and fixed values the observation, so
    FB > 0 means the mobile mean is higher. Pairs with a non-positive value
    are left out of VG, and pairs with a non-positive fixed value out of
    FAC2 and ER; both exclusions are counted.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("no pairs")
    keys = {(p.station_id, p.pollutant) for p in pairs}
    if len(keys) != 1:
        raise ValueError(f"pairs span several station/pollutant combinations: {sorted(keys)}")
    (station_id, pollutant), = keys

    m = np.array([p.mobile for p in pairs], dtype=float)
    f = np.array([p.fixed for p in pairs], dtype=float)
    mm, fm = m.mean(), f.mean()

    fb = 2.0 * (mm - fm) / (mm + fm) if mm + fm != 0 else None
    nmse = float(np.mean((m - f) ** 2) / (mm * fm)) if mm * fm > 0 else None

    pos = (m > 0) & (f > 0)
    vg = float(np.exp(np.mean((np.log(m[pos]) - np.log(f[pos])) ** 2))) if pos.any() else None

    fpos = f > 0
    if fpos.any():
        ratio = m[fpos] / f[fpos]
        fac2 = float(np.mean((ratio >= 0.5) & (ratio <= 2.0)))
        er = np.abs(m[fpos] - f[fpos]) / f[fpos] * 100.0
        er_med = float(median(er.tolist()))
        q25, q75 = (float(q) for q in np.percentile(er, [25, 75]))
    else:
        fac2 = er_med = q25 = q75 = None

    r = None
    if len(pairs) >= 2 and np.ptp(m) > 0 and np.ptp(f) > 0:
        dm, df = m - mm, f - fm
        r = float(np.sum(dm * df) / math.sqrt(np.sum(dm * dm) * np.sum(df * df)))
        r = max(-1.0, min(1.0, r))

    return MetricReport(
        station_id, pollutant, len(pairs),
        None if fb is None else float(fb), nmse, vg, r, fac2, er_med, q25, q75,
        int(np.count_nonzero(~pos)),
    )


def compare_all(pairs) -> list[MetricReport]:
    groups: dict[tuple, list] = {}
    for p in pairs:
        groups.setdefault((p.station_id, POLLUTANTS.index(p.pollutant)), []).append(p)
    return [compute_metrics(groups[k]) for k in sorted(groups)]


# --- files ----------------------------------------------------------------


def read_stations(path) -> list[StationRecord]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(STATION_HEADER) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"station CSV missing columns: {sorted(missing)}")
        for row in reader:

            def val(k):
                t = row[k].strip()
                return float(t) if t else math.nan

            out.append(
                StationRecord(
                    row["station_id"], GeoPoint(float(row["lat"]), float(row["lon"])), int(row["hour_start"]),
                    val("no2_ppb"), val("pm25_ugm3"), val("pm10_ugm3"),
                )
            )
    return out


def write_stations_csv(path, records):
    rows = (
        (r.station_id, repr(r.location.lat), repr(r.location.lon), r.hour_start, fmt(r.no2), fmt(r.pm25), fmt(r.pm10))
        for r in records
    )
    write_csv(path, STATION_HEADER, rows)


REPORT_HEADER = (
    "station_id", "pollutant", "n_pairs", "fb", "nmse", "vg", "r", "fac2",
    "er_median_pct", "er_q25_pct", "er_q75_pct", "n_excluded_nonpositive",
    "fb_pass", "nmse_pass", "vg_pass", "fac2_pass",
)


def write_metric_report_csv(path, reports):
    rows = []
    for rep in reports:
        d = asdict(rep)
        rows.append(
            [rep.station_id, rep.pollutant, rep.n_pairs]
            + [fmt(d[k]) for k in ("fb", "nmse", "vg", "r", "fac2", "er_median", "er_q25", "er_q75")]
            + [rep.n_excluded_nonpositive]
            + [int(v) for v in rep.flags().values()]
        )
    write_csv(path, REPORT_HEADER, rows)
