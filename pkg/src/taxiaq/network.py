"""Road polylines, 50-m segmentation and road file formats."""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._io import atomic_open
from .geo import GeoPoint, Projection

ROAD_CLASSES = ("motorway", "primary", "secondary", "tertiary", "residential")
DEFAULT_SEGMENT_LEN_M = 50.0

# cut positions closer than this to the polyline end are not cut
_END_EPS_M = 1e-6


@dataclass(eq=False)
class RoadSegment:
    segment_id: int
    road_class: str
    polyline: np.ndarray  # (k, 2) planar metres, k >= 2
    length_m: float
    road_index: int = -1

    @property
    def bbox(self):
        lo = self.polyline.min(axis=0)
        hi = self.polyline.max(axis=0)
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])


def polyline_length(pts) -> float:
    d = np.diff(np.asarray(pts, dtype=float), axis=0)
    return float(np.hypot(d[:, 0], d[:, 1]).sum())


def _dedupe(pts: np.ndarray) -> np.ndarray:
    keep = np.ones(len(pts), dtype=bool)
    keep[1:] = np.any(pts[1:] != pts[:-1], axis=1)
    return pts[keep]


def _split_polyline(pts: np.ndarray, target_len: float):
    pts = _dedupe(pts)
    if len(pts) < 2:
        return None
    d = np.diff(pts, axis=0)
    piece = np.hypot(d[:, 0], d[:, 1])
    cum = np.concatenate(([0.0], np.cumsum(piece)))
    total = cum[-1]
    if not total > 0:
        return None

    n_cuts = int(np.floor(total / target_len))
    cuts = target_len * np.arange(1, n_cuts + 1)
    cuts = cuts[cuts < total - _END_EPS_M]
    bounds = np.concatenate(([0.0], cuts, [total]))

    def at(s):
        i = int(np.searchsorted(cum, s, side="right")) - 1
        i = min(max(i, 0), len(piece) - 1)
        if s == cum[i]:
            return pts[i]
        frac = (s - cum[i]) / piece[i]
        return pts[i] + frac * d[i]

    out = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        inner = np.nonzero((cum > a) & (cum < b))[0]
        child = np.vstack([at(a), pts[inner], at(b)]) if len(inner) else np.vstack([at(a), at(b)])
        out.append(child)
    return out


def project_polylines(polylines, projection: Projection):
    """Turn ``(road_class, [GeoPoint, ...])`` pairs into planar arrays."""
    out = []
    for road_class, pts in polylines:
        lat = np.array([p.lat for p in pts], dtype=float)
        lon = np.array([p.lon for p in pts], dtype=float)
        x, y = projection.forward(lat, lon)
        out.append((road_class, np.column_stack([x, y])))
    return out


def network_origin(polylines) -> GeoPoint:
    """Centre of the bounding box of all vertices of geographic polylines."""
    lats = [p.lat for _, pts in polylines for p in pts]
    lons = [p.lon for _, pts in polylines for p in pts]
    if not lats:
        raise ValueError("no road vertices")
    return GeoPoint((min(lats) + max(lats)) / 2, (min(lons) + max(lons)) / 2)


def build_segments(polylines, target_len_m: float = DEFAULT_SEGMENT_LEN_M) -> list[RoadSegment]:
    """Cut planar polylines into pieces of ``target_len_m`` by arc length.

    ``polylines`` is a sequence of ``(road_class, points)`` where points is
    anything convertible to an ``(n, 2)`` float array in metres. The last
    piece of each polyline keeps the remainder. Ids are dense and follow
    input order.
    """
    if not target_len_m > 0:
        raise ValueError("target_len_m must be positive")
    segments: list[RoadSegment] = []
    for road_index, (road_class, pts) in enumerate(polylines):
        if road_class not in ROAD_CLASSES:
            raise ValueError(f"road {road_index}: unknown road class {road_class!r}")
        arr = np.asarray(pts, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2 or len(arr) < 2:
            raise ValueError(f"road {road_index}: need at least 2 points")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"road {road_index}: non-finite coordinates")
        children = _split_polyline(arr, target_len_m)
        if children is None:
            raise ValueError(f"road {road_index}: zero-length polyline")
        for child in children:
            segments.append(
                RoadSegment(
                    segment_id=len(segments),
                    road_class=road_class,
                    polyline=child,
                    length_m=polyline_length(child),
                    road_index=road_index,
                )
            )
    return segments


@dataclass(eq=False)
class RoadNetwork:
    """Segments plus the projection their planar coordinates live in."""

    segments: list[RoadSegment]
    projection: Projection
    _index: object = field(default=None, repr=False)

    @classmethod
    def from_polylines(cls, polylines, target_len_m=DEFAULT_SEGMENT_LEN_M, origin: GeoPoint | None = None):
        origin = origin or network_origin(polylines)
        proj = Projection(origin)
        return cls(build_segments(project_polylines(polylines, proj), target_len_m), proj)

    def index(self, cell_size_m: float = 100.0):
        from .spatial import build_index

        if self._index is None or self._index.cell_size != cell_size_m:
            self._index = build_index(self.segments, cell_size_m)
        return self._index

    def geo_coords(self, seg: RoadSegment):
        lat, lon = self.projection.inverse(seg.polyline[:, 0], seg.polyline[:, 1])
        return np.column_stack([lon, lat])


# --- file formats ---------------------------------------------------------

_WKT_RE = re.compile(r"^\s*LINESTRING\s*\((.*)\)\s*$", re.IGNORECASE)


def parse_wkt_linestring(text: str) -> list[GeoPoint]:
    m = _WKT_RE.match(text)
    if not m:
        raise ValueError(f"not a WKT LINESTRING: {text[:40]!r}")
    pts = []
    for pair in m.group(1).split(","):
        lon, lat = pair.split()
        pts.append(GeoPoint(float(lat), float(lon)))
    return pts


def format_wkt_linestring(lonlat: np.ndarray) -> str:
    return "LINESTRING (" + ", ".join(f"{lon!r} {lat!r}" for lon, lat in lonlat.tolist()) + ")"


def read_roads(path) -> list[tuple[str, list[GeoPoint]]]:
    """Read road polylines from a WKT CSV or a GeoJSON FeatureCollection."""
    path = Path(path)
    if path.suffix.lower() in (".geojson", ".json"):
        doc = json.loads(path.read_text(encoding="utf-8"))
        roads = []
        for i, feat in enumerate(doc.get("features", [])):
            geom = feat.get("geometry") or {}
            if geom.get("type") != "LineString":
                raise ValueError(f"feature {i}: expected LineString, got {geom.get('type')}")
            cls = (feat.get("properties") or {}).get("road_class")
            roads.append((cls, [GeoPoint(lat, lon) for lon, lat, *_ in geom["coordinates"]]))
        return roads

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"road_id", "road_class", "wkt_linestring"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"roads CSV missing columns: {sorted(missing)}")
        return [(row["road_class"], parse_wkt_linestring(row["wkt_linestring"])) for row in reader]


def write_roads_csv(path, polylines):
    with atomic_open(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["road_id", "road_class", "wkt_linestring"])
        for i, (cls, pts) in enumerate(polylines):
            lonlat = np.array([[p.lon, p.lat] for p in pts])
            w.writerow([i, cls, format_wkt_linestring(lonlat)])


def write_segments_csv(path, network: RoadNetwork):
    with atomic_open(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["segment_id", "road_class", "length_m", "wkt_linestring"])
        for seg in network.segments:
            w.writerow(
                [seg.segment_id, seg.road_class, repr(seg.length_m), format_wkt_linestring(network.geo_coords(seg))]
            )


def read_segments_csv(path, origin: GeoPoint | None = None) -> RoadNetwork:
    """Load a segments file written by :func:`write_segments_csv`.

    Segments are not re-cut; ids must be dense ``0..n-1``.
    """
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"segment_id", "road_class", "wkt_linestring"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"segments CSV missing columns: {sorted(missing)}")
        for row in reader:
            rows.append((int(row["segment_id"]), row["road_class"], parse_wkt_linestring(row["wkt_linestring"])))
    rows.sort(key=lambda r: r[0])
    if [r[0] for r in rows] != list(range(len(rows))):
        raise ValueError("segment ids must be dense 0..n-1")
    geo = [(cls, pts) for _, cls, pts in rows]
    proj = Projection(origin or network_origin(geo))
    segs = []
    for (sid, cls, _), (_, arr) in zip(rows, project_polylines(geo, proj)):
        segs.append(RoadSegment(sid, cls, arr, polyline_length(arr)))
    return RoadNetwork(segs, proj)
