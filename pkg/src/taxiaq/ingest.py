"""Sensor record parsing and plausibility QA.

The inter-device deviation check for co-located sensors lives here too.
"""

from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from ._io import atomic_open
from .geo import GeoPoint

POLLUTANTS = ("no2", "pm25", "pm10")
OBS_HEADER = ("device_id", "timestamp", "lat", "lon", "no2_ppb", "pm25_ugm3", "pm10_ugm3", "temp_c", "rh_pct")
_FLOAT_COLS = ("lat", "lon", "no2", "pm25", "pm10", "temp", "rh")

MAX_CONCENTRATION = 1000.0
TEMP_RANGE_C = (-40.0, 60.0)
RH_RANGE_PCT = (0.0, 100.0)
DEVIATION_LIMIT_PCT = 15.0

QA_RULES = (
    "non_finite",
    "coordinates_out_of_range",
    "negative_concentration",
    "concentration_above_max",
    "temperature_out_of_range",
    "humidity_out_of_range",
)


class ObservationFormatError(ValueError):
    """The input cannot be read at all (e.g. wrong header)."""


@dataclass(frozen=True)
class Observation:
    device_id: str
    timestamp: int
    location: GeoPoint
    no2: float
    pm25: float
    pm10: float
    temp: float
    rh: float


@dataclass(eq=False)
class ObservationBatch:
    """Column-oriented observations; ``device`` holds codes into ``device_names``."""

    device: np.ndarray
    device_names: list
    timestamp: np.ndarray
    lat: np.ndarray
    lon: np.ndarray
    no2: np.ndarray
    pm25: np.ndarray
    pm10: np.ndarray
    temp: np.ndarray
    rh: np.ndarray
    reasons: list | None = field(default=None, repr=False)  # set on QA rejects

    def __len__(self):
        return int(self.timestamp.size)

    @classmethod
    def empty(cls):
        f = np.empty(0)
        return cls(np.empty(0, np.int32), [], np.empty(0, np.int64), f, f, f, f, f, f, f)

    @classmethod
    def from_records(cls, records: Iterable[Observation]):
        records = list(records)
        names = sorted({r.device_id for r in records})
        code = {n: i for i, n in enumerate(names)}
        return cls(
            device=np.array([code[r.device_id] for r in records], dtype=np.int32),
            device_names=names,
            timestamp=np.array([r.timestamp for r in records], dtype=np.int64),
            lat=np.array([r.location.lat for r in records], dtype=float),
            lon=np.array([r.location.lon for r in records], dtype=float),
            **{c: np.array([getattr(r, c) for r in records], dtype=float) for c in _FLOAT_COLS[2:]},
        )

    def records(self):
        for i in range(len(self)):
            yield Observation(
                self.device_names[self.device[i]],
                int(self.timestamp[i]),
                GeoPoint(float(self.lat[i]), float(self.lon[i])),
                float(self.no2[i]), float(self.pm25[i]), float(self.pm10[i]),
                float(self.temp[i]), float(self.rh[i]),
            )

    def take(self, sel):
        """Rows selected by ``sel``; a mask that keeps everything shares the arrays."""
        sel = np.asarray(sel)
        if sel.dtype == bool and sel.size == len(self) and sel.all():
            sel = slice(None)
        return ObservationBatch(
            self.device[sel], self.device_names, self.timestamp[sel],
            *(getattr(self, c)[sel] for c in _FLOAT_COLS),
        )

    def pollutant(self, name: str) -> np.ndarray:
        return getattr(self, name)

    @classmethod
    def concat(cls, batches):
        batches = [b for b in batches if len(b)]
        if not batches:
            return cls.empty()
        names = sorted({n for b in batches for n in b.device_names})
        code = {n: i for i, n in enumerate(names)}
        dev = [np.array([code[n] for n in b.device_names], dtype=np.int32)[b.device] for b in batches]
        return cls(
            np.concatenate(dev), names,
            np.concatenate([b.timestamp for b in batches]),
            *(np.concatenate([getattr(b, c) for b in batches]) for c in _FLOAT_COLS),
        )


@dataclass(frozen=True)
class ParseReject:
    line_no: int
    reason: str


def _text_lines(stream):
    if isinstance(stream, (bytes, bytearray)):
        stream = io.BytesIO(stream)
    if isinstance(stream, io.IOBase) and not isinstance(stream, io.TextIOBase):
        stream = io.TextIOWrapper(stream, encoding="utf-8", newline="")
    return stream


def _parse_row(row):
    if len(row) != len(OBS_HEADER):
        raise ValueError(f"expected {len(OBS_HEADER)} fields, got {len(row)}")
    dev = row[0].strip()
    if not dev:
        raise ValueError("empty device_id")
    try:
        ts = int(row[1])
    except ValueError:
        raise ValueError("timestamp is not an integer") from None
    if ts <= 0:
        raise ValueError("timestamp must be positive")
    vals = []
    for name, text in zip(OBS_HEADER[2:], row[2:]):
        try:
            vals.append(float(text))
        except ValueError:
            raise ValueError(f"bad number in {name}") from None
    lat, lon = vals[0], vals[1]
    if not -90.0 <= lat <= 90.0:
        raise ValueError("latitude out of range")
    if not -180.0 <= lon <= 180.0:
        raise ValueError("longitude out of range")
    return dev, ts, vals


def parse_observations(stream, chunk_rows: int = 200_000):
    """Parse the observation CSV.

    ``stream`` may be raw bytes or a file object in either mode; an
    iterable of text lines works as well. Returns
    ``(ObservationBatch, [ParseReject, ...])``. A missing or wrong header
    raises :class:`ObservationFormatError`; bad data lines are rejected
    individually and parsing carries on. Blank lines are ignored.
    """
    reader = csv.reader(_text_lines(stream))
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != OBS_HEADER:
        raise ObservationFormatError(f"observation CSV header must be {','.join(OBS_HEADER)}")

    names: dict[str, int] = {}
    batches, rejects = [], []
    dev, ts, vals = [], [], []

    def flush():
        if not ts:
            return
        v = np.array(vals, dtype=float).reshape(-1, 7)
        batches.append(
            ObservationBatch(
                np.array(dev, dtype=np.int32), None, np.array(ts, dtype=np.int64),
                *(np.ascontiguousarray(v[:, j]) for j in range(7)),
            )
        )
        dev.clear()
        ts.clear()
        vals.clear()

    for line_no, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        try:
            d, t, v = _parse_row(row)
        except ValueError as exc:
            rejects.append(ParseReject(line_no, str(exc)))
            continue
        dev.append(names.setdefault(d, len(names)))
        ts.append(t)
        vals.extend(v)
        if len(ts) >= chunk_rows:
            flush()
    flush()

    if not batches:
        return ObservationBatch.empty(), rejects
    first_seen = list(names)
    order = sorted(range(len(first_seen)), key=first_seen.__getitem__)
    remap = np.empty(len(first_seen), dtype=np.int32)
    remap[order] = np.arange(len(first_seen), dtype=np.int32)
    out = ObservationBatch(
        remap[np.concatenate([b.device for b in batches])],
        sorted(first_seen),
        np.concatenate([b.timestamp for b in batches]),
        *(np.concatenate([getattr(b, c) for b in batches]) for c in _FLOAT_COLS),
    )
    return out, rejects


def read_observations(path):
    with open(path, "rb") as fh:
        return parse_observations(fh)


def write_observations_csv(path, batch: ObservationBatch):
    with atomic_open(path) as fh:
        fh.write(",".join(OBS_HEADER) + "\n")
        names = batch.device_names
        cols = [getattr(batch, c).tolist() for c in _FLOAT_COLS]
        for i, (d, t) in enumerate(zip(batch.device.tolist(), batch.timestamp.tolist())):
            fh.write(f"{names[d]},{t},{','.join(repr(c[i]) for c in cols)}\n")


@dataclass
class QaReport:
    n_input: int = 0
    accepted: int = 0
    unparseable: int = 0
    rejected_by_rule: dict = field(default_factory=lambda: {r: 0 for r in QA_RULES})
    flagged_pm_inversion: int = 0
    accepted_per_device: dict = field(default_factory=dict)

    @property
    def rejected(self) -> int:
        return sum(self.rejected_by_rule.values())

    def is_balanced(self) -> bool:
        return self.accepted + self.rejected + self.unparseable == self.n_input

    def merge(self, other: "QaReport") -> "QaReport":
        dev = Counter(self.accepted_per_device)
        dev.update(other.accepted_per_device)
        return QaReport(
            self.n_input + other.n_input,
            self.accepted + other.accepted,
            self.unparseable + other.unparseable,
            {r: self.rejected_by_rule.get(r, 0) + other.rejected_by_rule.get(r, 0) for r in QA_RULES},
            self.flagged_pm_inversion + other.flagged_pm_inversion,
            dict(sorted(dev.items())),
        )

    def to_dict(self):
        return {
            "n_input": self.n_input,
            "accepted": self.accepted,
            "rejected": self.rejected,
            "unparseable": self.unparseable,
            "rejected_by_rule": dict(self.rejected_by_rule),
            "flagged_pm_inversion": self.flagged_pm_inversion,
            "accepted_per_device": dict(self.accepted_per_device),
        }


def qa_rule_failures(batch: ObservationBatch) -> np.ndarray:
    """Index into QA_RULES of the first rule each record breaks, or -1."""
    conc = (batch.no2, batch.pm25, batch.pm10)
    with np.errstate(invalid="ignore"):
        checks = [
            ~np.logical_and.reduce([np.isfinite(getattr(batch, c)) for c in _FLOAT_COLS]),
            (np.abs(batch.lat) > 90) | (np.abs(batch.lon) > 180),
            np.logical_or.reduce([c < 0 for c in conc]),
            np.logical_or.reduce([c > MAX_CONCENTRATION for c in conc]),
            (batch.temp < TEMP_RANGE_C[0]) | (batch.temp > TEMP_RANGE_C[1]),
            (batch.rh < RH_RANGE_PCT[0]) | (batch.rh > RH_RANGE_PCT[1]),
        ]
    rule = np.full(len(batch), -1, dtype=np.int8)
    for i in reversed(range(len(checks))):
        rule[checks[i]] = i
    return rule


def qa_filter(batch: ObservationBatch, n_unparseable: int = 0):
    """Split a batch into accepted and rejected records.

    PM2.5 above PM10 is counted as flagged but kept. Returns
    ``(accepted, rejected, report)``; ``rejected.reasons`` names the rule
    each of its rows broke.
    """
    rule = qa_rule_failures(batch)
    ok = rule < 0
    accepted = batch.take(ok)
    rejected = batch.take(~ok)
    rejected.reasons = [QA_RULES[r] for r in rule[~ok].tolist()]

    by_rule = np.bincount(rule[~ok].astype(np.int64), minlength=len(QA_RULES))
    per_dev = np.bincount(accepted.device, minlength=len(batch.device_names))
    report = QaReport(
        n_input=len(batch) + n_unparseable,
        accepted=len(accepted),
        unparseable=n_unparseable,
        rejected_by_rule={r: int(c) for r, c in zip(QA_RULES, by_rule)},
        flagged_pm_inversion=int(np.count_nonzero(accepted.pm25 > accepted.pm10)),
        accepted_per_device={batch.device_names[i]: int(c) for i, c in enumerate(per_dev) if c},
    )
    return accepted, rejected, report


@dataclass(frozen=True)
class DeviationResult:
    percent: float
    n_pairs: int
    limit_pct: float = DEVIATION_LIMIT_PCT

    @property
    def passes(self) -> bool:
        return self.percent < self.limit_pct


def inter_device_deviation(series_a, series_b, window_s: float = 60.0) -> DeviationResult:
    """Mean symmetric relative deviation between two co-located sensors.

    Samples are paired one-to-one, closest in time first, when their
    timestamps differ by less than ``window_s``. Each pair contributes
    ``|a - b| / ((a + b) / 2)``.
    """
    if not series_a or not series_b:
        raise ValueError("both series must be non-empty")
    a = sorted((float(t), float(v)) for t, v in series_a)
    b = sorted((float(t), float(v)) for t, v in series_b)
    tb = [t for t, _ in b]

    cands = []
    lo = 0
    for i, (ta, va) in enumerate(a):
        while lo < len(b) and tb[lo] <= ta - window_s:
            lo += 1
        j = lo
        while j < len(b) and tb[j] < ta + window_s:
            t2, v2 = b[j]
            cands.append((abs(ta - t2), min(ta, t2), max(ta, t2), min(va, v2), max(va, v2), i, j))
            j += 1
    cands.sort(key=lambda c: c[:5])

    used_a, used_b = set(), set()
    total, n = 0.0, 0
    for _, _, _, lo_v, hi_v, i, j in cands:
        if i in used_a or j in used_b:
            continue
        used_a.add(i)
        used_b.add(j)
        if not lo_v > 0:
            raise ValueError("paired values must be positive")
        total += (hi_v - lo_v) / ((hi_v + lo_v) / 2)
        n += 1
    if n == 0:
        raise ValueError("no co-located samples")
    pct = 100.0 * total / n
    if not math.isfinite(pct):
        raise ValueError("non-finite deviation")
    return DeviationResult(pct, n)
