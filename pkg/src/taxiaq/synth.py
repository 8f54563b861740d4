"""Deterministic synthetic taxi fleets over a grid city, with ground truth.

The city is a Manhattan grid centred on ``origin``. Taxis random-walk the
grid at constant speed and report every ``sample_interval_s``; the
pollution field is a per-pollutant base level plus a diurnal profile, plus
a flat elevation inside planted hotspot discs, plus Gaussian sensor noise.
Reported positions carry isotropic Gaussian GPS error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from ._io import fmt, write_csv
from .geo import GeoPoint, Projection
from .ingest import POLLUTANTS, ObservationBatch
from .network import DEFAULT_SEGMENT_LEN_M, ROAD_CLASSES, RoadNetwork, build_segments
from .stations import StationRecord

GROUND_TRUTH_HEADER = ("segment_id", "pollutant", "true_mean", "is_planted_hotspot")


@dataclass(frozen=True)
class HotspotZone:
    x: float  # metres east of the grid centre
    y: float
    radius_m: float
    elevation: dict  # pollutant -> added concentration

    def contains(self, x, y):
        return np.hypot(np.asarray(x) - self.x, np.asarray(y) - self.y) <= self.radius_m


@dataclass
class SynthConfig:
    seed: int = 0
    rows: int = 10
    cols: int = 10
    spacing_m: float = 500.0
    n_taxis: int = 314
    duration_s: int = 3600
    sample_interval_s: int = 10
    speed_mps: float = 10.0
    gps_sigma_m: float = 10.0
    start_ts: int = 1675180800  # 2023-02-01 00:00 UTC+8
    tz_offset_s: int = 8 * 3600
    origin_lat: float = 23.13
    origin_lon: float = 113.26
    base: dict = field(default_factory=lambda: {"no2": 40.0, "pm25": 22.0, "pm10": 40.0})
    diurnal_amplitude: dict = field(default_factory=lambda: {"no2": 20.0, "pm25": 8.0, "pm10": 12.0})
    noise_sigma: dict = field(default_factory=lambda: {"no2": 5.0, "pm25": 4.0, "pm10": 6.0})
    zones: list = field(default_factory=list)
    n_stations: int = 2
    station_factor: float = 0.7
    target_len_m: float = DEFAULT_SEGMENT_LEN_M

    def __post_init__(self):
        for name in ("rows", "cols"):
            if getattr(self, name) < 2:
                raise ValueError(f"{name} must be at least 2")
        for name in ("spacing_m", "n_taxis", "duration_s", "sample_interval_s", "speed_mps", "target_len_m"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.gps_sigma_m < 0:
            raise ValueError("gps_sigma_m must be non-negative")
        self.zones = [z if isinstance(z, HotspotZone) else HotspotZone(*z) for z in self.zones]

    @property
    def projection(self):
        return Projection(GeoPoint(self.origin_lat, self.origin_lon))

    @property
    def n_samples(self):
        return self.duration_s // self.sample_interval_s

    @classmethod
    def from_mapping(cls, kv: dict):
        """Build from flat string settings, as read from a key=value file.

        Per-pollutant values use ``base_pm25``-style keys. Zones are
        ``x,y,radius,no2,pm25,pm10`` groups separated by ``;``.
        """
        kw = {}
        types = {f.name: f.type for f in fields(cls)}
        base, amp, sig = {}, {}, {}
        for key, raw in kv.items():
            raw = str(raw).strip()
            for prefix, target in (("base_", base), ("amplitude_", amp), ("noise_", sig)):
                if key.startswith(prefix) and key[len(prefix):] in POLLUTANTS:
                    target[key[len(prefix):]] = float(raw)
                    break
            else:
                if key == "zones":
                    kw["zones"] = _parse_zones(raw)
                elif key in types:
                    kw[key] = int(raw) if types[key] == "int" else float(raw)
                else:
                    raise ValueError(f"unknown synth setting {key!r}")
        cfg = cls(**kw)
        cfg.base.update(base)
        cfg.diurnal_amplitude.update(amp)
        cfg.noise_sigma.update(sig)
        return cfg


def _parse_zones(text):
    zones = []
    for chunk in filter(None, (c.strip() for c in text.split(";"))):
        v = [float(p) for p in chunk.split(",")]
        if len(v) != 6:
            raise ValueError(f"zone needs x,y,radius,no2,pm25,pm10: {chunk!r}")
        zones.append(HotspotZone(v[0], v[1], v[2], dict(zip(POLLUTANTS, v[3:]))))
    return zones


# --- network --------------------------------------------------------------


def _node_xy(cfg: SynthConfig):
    xs = (np.arange(cfg.cols) - (cfg.cols - 1) / 2) * cfg.spacing_m
    ys = (np.arange(cfg.rows) - (cfg.rows - 1) / 2) * cfg.spacing_m
    return xs, ys


def gen_network(cfg: SynthConfig):
    """Planar grid polylines: one per row, then one per column."""
    xs, ys = _node_xy(cfg)
    lines = [np.array([[xs[0], y], [xs[-1], y]]) for y in ys]
    lines += [np.array([[x, ys[0]], [x, ys[-1]]]) for x in xs]
    return [(ROAD_CLASSES[i % len(ROAD_CLASSES)], pts) for i, pts in enumerate(lines)]


def network_geo(cfg: SynthConfig):
    """The grid as ``(road_class, [GeoPoint, ...])`` polylines."""
    proj = cfg.projection
    out = []
    for cls, pts in gen_network(cfg):
        lat, lon = proj.inverse(pts[:, 0], pts[:, 1])
        out.append((cls, [GeoPoint(float(a), float(b)) for a, b in zip(lat, lon)]))
    return out


def build_network(cfg: SynthConfig) -> RoadNetwork:
    return RoadNetwork(build_segments(gen_network(cfg), cfg.target_len_m), cfg.projection)


# --- trajectories ---------------------------------------------------------


@dataclass(eq=False)
class Trajectory:
    taxi: int
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray


def _walk_nodes(rng, rows, cols, n_edges):
    """Random walk over grid nodes, avoiding immediate U-turns."""
    r, c = int(rng.integers(rows)), int(rng.integers(cols))
    pr = pc = -1
    path_r, path_c = [r], [c]
    picks = rng.random(n_edges)
    for u in picks.tolist():
        nbrs = [(r + dr, c + dc) for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1))
                if 0 <= r + dr < rows and 0 <= c + dc < cols and (r + dr, c + dc) != (pr, pc)]
        pr, pc = r, c
        r, c = nbrs[int(u * len(nbrs))]
        path_r.append(r)
        path_c.append(c)
    return np.array(path_r), np.array(path_c)


def gen_trajectories(cfg: SynthConfig) -> list[Trajectory]:
    xs, ys = _node_xy(cfg)
    n = cfg.n_samples
    step = cfg.speed_mps * cfg.sample_interval_s
    n_edges = int(math.ceil(n * step / cfg.spacing_m)) + 1
    out = []
    for taxi in range(cfg.n_taxis):
        rng = np.random.default_rng([cfg.seed, taxi, 0])
        phase = int(rng.integers(cfg.sample_interval_s))
        pr, pc = _walk_nodes(rng, cfg.rows, cfg.cols, n_edges)
        s = np.arange(n) * step / cfg.spacing_m
        e = np.floor(s).astype(np.int64)
        frac = s - e
        x = xs[pc[e]] + frac * (xs[pc[e + 1]] - xs[pc[e]])
        y = ys[pr[e]] + frac * (ys[pr[e + 1]] - ys[pr[e]])
        t = cfg.start_ts + phase + np.arange(n, dtype=np.int64) * cfg.sample_interval_s
        out.append(Trajectory(taxi, t, x, y))
    return out


# --- pollution field ------------------------------------------------------


def diurnal_shape(pollutant: str, local_hour):
    """Profile in [0, 1] over the local day.

    PM has morning (~9h) and evening (~19h) peaks; NO2 bottoms out at noon
    and peaks at 18h.
    """
    h = np.asarray(local_hour, dtype=float) % 24.0
    if pollutant == "no2":
        u = (h - 12.0) % 24.0
        return np.where(u < 6.0, 0.5 * (1 - np.cos(np.pi * u / 6.0)), 0.5 * (1 + np.cos(np.pi * (u - 6.0) / 18.0)))

    def bump(mu):
        d = (h - mu + 12.0) % 24.0 - 12.0
        return np.exp(-0.5 * (d / 1.5) ** 2)

    return np.maximum(bump(9.0), bump(19.0))


def background(cfg: SynthConfig, pollutant, t):
    """Base level plus diurnal term, without zones or noise."""
    hour = ((np.asarray(t) + cfg.tz_offset_s) % 86400) / 3600.0
    return cfg.base[pollutant] + cfg.diurnal_amplitude[pollutant] * diurnal_shape(pollutant, hour)


def true_concentration(cfg: SynthConfig, pollutant, x, y, t):
    c = background(cfg, pollutant, t)
    for z in cfg.zones:
        c = c + np.where(z.contains(x, y), z.elevation.get(pollutant, 0.0), 0.0)
    return np.asarray(c, dtype=float)


@dataclass(eq=False)
class GroundTruth:
    segment_id: np.ndarray
    true_mean: np.ndarray  # (3, n) noise-free mean at the taxis' true positions
    planted: frozenset  # segments lying wholly inside a zone
    boundary: frozenset  # segments crossing a zone edge

    def outside(self, n_segments):
        return frozenset(range(n_segments)) - self.planted - self.boundary


def zone_membership(cfg: SynthConfig, network: RoadNetwork):
    planted, boundary = set(), set()
    for seg in network.segments:
        x, y = seg.polyline[:, 0], seg.polyline[:, 1]
        for z in cfg.zones:
            inside = z.contains(x, y)
            if inside.all():
                planted.add(seg.segment_id)
            elif _touches(seg.polyline, z):
                boundary.add(seg.segment_id)
    boundary -= planted
    return frozenset(planted), frozenset(boundary)


def _touches(poly, z):
    a, b = poly[:-1], poly[1:]
    d = b - a
    l2 = np.einsum("ij,ij->i", d, d)
    t = np.clip(np.einsum("ij,ij->i", np.array([z.x, z.y]) - a, d) / np.where(l2 > 0, l2, 1), 0, 1)
    closest = a + t[:, None] * d
    return bool(np.any(np.hypot(closest[:, 0] - z.x, closest[:, 1] - z.y) <= z.radius_m))


def gen_observations(cfg: SynthConfig, trajectories, network: RoadNetwork | None = None):
    """Noisy observations plus the noise-free truth they were drawn from."""
    network = network or build_network(cfg)
    proj = cfg.projection
    cols = {k: [] for k in ("dev", "t", "x", "y", "tx", "ty", "no2", "pm25", "pm10", "temp", "rh", "true")}
    for tr in trajectories:
        rng = np.random.default_rng([cfg.seed, tr.taxi, 1])
        n = tr.t.size
        true = [true_concentration(cfg, p, tr.x, tr.y, tr.t) for p in POLLUTANTS]
        for p, c in zip(POLLUTANTS, true):
            noisy = np.maximum(c + rng.normal(0.0, cfg.noise_sigma[p], n), 0.0)
            cols[p].append(np.round(noisy, 1))
        cols["x"].append(tr.x + rng.normal(0.0, cfg.gps_sigma_m, n))
        cols["y"].append(tr.y + rng.normal(0.0, cfg.gps_sigma_m, n))
        hour = ((tr.t + cfg.tz_offset_s) % 86400) / 3600.0
        phase = np.sin(2 * np.pi * (hour - 9.0) / 24.0)
        cols["temp"].append(np.round(22.0 + 5.0 * phase + rng.normal(0, 0.3, n), 2))
        cols["rh"].append(np.round(np.clip(60.0 - 12.0 * phase + rng.normal(0, 2.0, n), 0, 100), 1))
        cols["dev"].append(np.full(n, tr.taxi, dtype=np.int32))
        cols["t"].append(tr.t)
        cols["tx"].append(tr.x)
        cols["ty"].append(tr.y)
        cols["true"].append(np.stack(true))
    cat = {k: np.concatenate(v, axis=-1) for k, v in cols.items()}

    order = np.lexsort((cat["dev"], cat["t"]))
    lat, lon = proj.inverse(cat["x"][order], cat["y"][order])
    width = max(4, len(str(cfg.n_taxis - 1)))
    batch = ObservationBatch(
        device=cat["dev"][order],
        device_names=[f"taxi{i:0{width}d}" for i in range(cfg.n_taxis)],
        timestamp=cat["t"][order],
        lat=np.round(lat, 6), lon=np.round(lon, 6),
        no2=cat["no2"][order], pm25=cat["pm25"][order], pm10=cat["pm10"][order],
        temp=cat["temp"][order], rh=cat["rh"][order],
    )

    # on-network true positions snap at distance ~0
    ids, _ = network.index().nearest_many(cat["tx"], cat["ty"], 1.0)
    hit = ids >= 0
    cnt = np.bincount(ids[hit], minlength=len(network.segments))
    sums = np.stack([np.bincount(ids[hit], weights=cat["true"][k][hit], minlength=len(network.segments)) for k in range(3)])
    seen = np.nonzero(cnt)[0]
    planted, boundary = zone_membership(cfg, network)
    truth = GroundTruth(seen, sums[:, seen] / cnt[seen], planted, boundary)
    return batch, truth


def gen_stations(cfg: SynthConfig) -> list[StationRecord]:
    """Hourly fixed-station records placed just off the grid."""
    if cfg.n_stations <= 0:
        return []
    xs, ys = _node_xy(cfg)
    proj = cfg.projection
    out = []
    hours = np.arange(cfg.start_ts, cfg.start_ts + cfg.duration_s, 3600)
    for k in range(cfg.n_stations):
        frac = (k + 1) / (cfg.n_stations + 1)
        x = xs[0] + frac * (xs[-1] - xs[0]) + cfg.spacing_m / 4
        y = ys[0] + frac * (ys[-1] - ys[0]) + cfg.spacing_m / 4
        lat, lon = proj.inverse(x, y)
        loc = GeoPoint(float(lat), float(lon))
        for h in hours.tolist():
            mid = h + 1800
            vals = [round(float(cfg.station_factor * background(cfg, p, mid)), 1) for p in POLLUTANTS]
            out.append(StationRecord(f"S{k + 1}", loc, int(h), *vals))
    return out


def write_ground_truth_csv(path, truth: GroundTruth):
    rows = []
    for i, sid in enumerate(truth.segment_id.tolist()):
        for k, p in enumerate(POLLUTANTS):
            rows.append((sid, p, fmt(truth.true_mean[k, i]), int(sid in truth.planted)))
    write_csv(path, GROUND_TRUTH_HEADER, rows)
