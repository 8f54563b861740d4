"""Command-line entry point: ``taxiaq <command> [options]``.

Settings come from an optional flat ``key = value`` file (``--config``);
any flag given on the command line wins over the file. Exit status is 0 on
success, 1 for usage errors and 2 when an input file cannot be used.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from ._io import write_csv, write_json
from .geo import GeoPoint, Projection
from .hotspot import (
    DEFAULT_GAP_S, DEFAULT_VMS_DAYS, identify_hotspots, write_hotspots_csv, write_hotspots_geojson,
)
from .ingest import ObservationFormatError, qa_filter, read_observations, write_observations_csv
from .kernels import BACKEND
from .network import RoadNetwork, read_roads, read_segments_csv, write_roads_csv, write_segments_csv
from .reduction import (
    DEFAULT_TZ_OFFSET_S, SegmentSummaries, aggregate_hourly, snap_observations, summarize_segments,
    write_estimates_csv, write_summaries_csv, write_summaries_geojson,
)
from .spatial import DEFAULT_CELL_M, DEFAULT_MAX_SNAP_M
from .stations import (
    DEFAULT_BUFFER_M, compare_all, pair_buffer_hours, read_stations, write_metric_report_csv, write_stations_csv,
)
from .synth import SynthConfig, gen_observations, gen_stations, gen_trajectories, network_geo, write_ground_truth_csv

log = logging.getLogger("taxiaq")


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


@dataclass
class RunConfig:
    roads: str = ""
    observations: str = ""
    stations: str = ""
    segments: str = ""
    out_dir: str = "out"
    origin: str = "auto"
    target_len_m: float = 50.0
    cell_size_m: float = DEFAULT_CELL_M
    max_snap_m: float = DEFAULT_MAX_SNAP_M
    buffer_radius_m: float = DEFAULT_BUFFER_M
    gap_s: int = DEFAULT_GAP_S
    vms_days: int = DEFAULT_VMS_DAYS
    tz_offset_s: int = DEFAULT_TZ_OFFSET_S
    workers: int = 1
    weighting: str = "count"

    def validate(self):
        for name in ("target_len_m", "cell_size_m", "max_snap_m", "buffer_radius_m", "gap_s", "vms_days", "workers"):
            if not getattr(self, name) > 0:
                raise UsageError(f"{name} must be positive")
        if self.weighting not in ("count", "duration"):
            raise UsageError("weighting must be 'count' or 'duration'")
        self.origin_point()

    def origin_point(self):
        if self.origin.strip().lower() == "auto":
            return None
        try:
            lat, lon = (float(v) for v in self.origin.split(","))
            return GeoPoint(lat, lon)
        except ValueError as exc:
            raise UsageError(f"origin must be 'auto' or 'lat,lon': {exc}") from None


_RUN_FIELDS = {f.name: f.type for f in fields(RunConfig)}
_SYNTH_FIELDS = {f.name for f in fields(SynthConfig)} | {"zones"}


def _is_synth_key(key):
    if key in _SYNTH_FIELDS:
        return True
    return any(key.startswith(p) for p in ("base_", "amplitude_", "noise_"))


def read_config_file(path) -> dict:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    kv = {}
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        kv[k.replace("-", "_")] = v
    for k in kv:
        if k not in _RUN_FIELDS and not _is_synth_key(k):
            raise UsageError(f"{path}: unknown setting {k!r}")
    return kv


def _coerce(name, raw):
    t = _RUN_FIELDS[name]
    try:
        return int(raw) if t == "int" else float(raw) if t == "float" else str(raw)
    except ValueError:
        raise UsageError(f"bad value for {name}: {raw!r}") from None


def resolve_config(args) -> tuple[RunConfig, dict]:
    """Merge file settings with flags (flags win)."""
    kv = read_config_file(args.config) if args.config else {}
    run = {k: _coerce(k, v) for k, v in kv.items() if k in _RUN_FIELDS}
    synth = {k: v for k, v in kv.items() if _is_synth_key(k)}
    for name in _RUN_FIELDS:
        val = getattr(args, name, None)
        if val is not None:
            run[name] = val
    if getattr(args, "seed", None) is not None:
        synth["seed"] = args.seed
    for shared in ("tz_offset_s", "target_len_m"):
        if shared in run:
            synth[shared] = run[shared]
    cfg = RunConfig(**run)
    cfg.validate()
    return cfg, synth


def _need(path, what):
    if not path:
        raise UsageError(f"--{what} is required")
    if not Path(path).is_file():
        raise InputError(f"{what} file not found: {path}")
    return path


# --- commands -------------------------------------------------------------


def cmd_segment(cfg: RunConfig) -> RoadNetwork:
    path = _need(cfg.roads, "roads")
    try:
        roads = read_roads(path)
        net = RoadNetwork.from_polylines(roads, cfg.target_len_m, cfg.origin_point())
    except (ValueError, KeyError) as exc:
        raise InputError(f"{path}: {exc}") from None
    out = Path(cfg.out_dir)
    write_segments_csv(out / "segments.csv", net)
    log.info("segment: %d roads -> %d segments", len(roads), len(net.segments))
    return net


def _load_network(cfg: RunConfig) -> RoadNetwork:
    if cfg.segments:
        path = _need(cfg.segments, "segments")
        try:
            return read_segments_csv(path, cfg.origin_point())
        except (ValueError, KeyError) as exc:
            raise InputError(f"{path}: {exc}") from None
    if cfg.roads:
        return cmd_segment(cfg)
    raise UsageError("--segments (or --roads) is required")


def _load_observations(cfg: RunConfig):
    path = _need(cfg.observations, "observations")
    try:
        batch, parse_rejects = read_observations(path)
    except (ObservationFormatError, UnicodeDecodeError) as exc:
        raise InputError(f"{path}: {exc}") from None
    accepted, rejected, report = qa_filter(batch, n_unparseable=len(parse_rejects))
    rows = [("parse", r.line_no, r.reason) for r in parse_rejects]
    rows += [("qa", "", reason) for reason in rejected.reasons]
    return accepted, report, rows


def cmd_reduce(cfg: RunConfig, network: RoadNetwork | None = None):
    network = network or _load_network(cfg)
    obs, qa, reject_rows = _load_observations(cfg)
    index = network.index(cfg.cell_size_m)
    snapped, n_far = snap_observations(obs, index, network.projection, cfg.max_snap_m, workers=cfg.workers)
    est = aggregate_hourly(snapped, cfg.tz_offset_s, workers=cfg.workers)
    if len(est):
        summ = summarize_segments(est)
    else:
        summ = SegmentSummaries(np.empty(0, np.int64), np.empty((3, 0)), np.empty(0, np.int64), np.empty(0, np.int64))

    out = Path(cfg.out_dir)
    write_estimates_csv(out / "estimates.csv", est)
    write_summaries_csv(out / "summaries.csv", summ)
    write_summaries_geojson(out / "summaries.geojson", network, summ)
    write_csv(out / "rejects.csv", ("stage", "line_no", "reason"), reject_rows)
    write_json(
        out / "reduce_report.json",
        {
            "qa": qa.to_dict(),
            "snap": {"max_snap_m": cfg.max_snap_m, "snapped": len(snapped), "rejected_beyond_max_snap": n_far},
            "estimates": len(est),
            "segments_with_data": len(summ),
            "tz_offset_s": cfg.tz_offset_s,
        },
    )
    log.info("reduce: %d accepted, %d snapped, %d hourly estimates", qa.accepted, len(snapped), len(est))
    return snapped, est, summ


def cmd_hotspots(cfg: RunConfig, network: RoadNetwork | None = None, snapped=None):
    network = network or _load_network(cfg)
    if snapped is None:
        obs, _, _ = _load_observations(cfg)
        snapped, _ = snap_observations(obs, network.index(cfg.cell_size_m), network.projection, cfg.max_snap_m, workers=cfg.workers)
    results = identify_hotspots(snapped, cfg.gap_s, cfg.vms_days, cfg.tz_offset_s, cfg.weighting)
    out = Path(cfg.out_dir)
    write_hotspots_csv(out / "hotspots.csv", results)
    write_hotspots_geojson(out / "hotspots.geojson", network, results)
    n_hot = {p: sum(r.is_hotspot[p] for r in results) for p in ("no2", "pm25", "pm10")}
    write_json(
        out / "hotspots_report.json",
        {
            "segments": len(results),
            "vms_segments": sum(r.is_vms for r in results),
            "hotspots": n_hot,
            "gap_s": cfg.gap_s,
            "vms_days": cfg.vms_days,
            "weighting": cfg.weighting,
        },
    )
    log.info("hotspots: %d segments, %d VMS, hotspots %s", len(results), sum(r.is_vms for r in results), n_hot)
    return results


def cmd_compare(cfg: RunConfig, projection: Projection | None = None):
    obs, _, _ = _load_observations(cfg)
    path = _need(cfg.stations, "stations")
    try:
        stations = read_stations(path)
    except (ValueError, KeyError) as exc:
        raise InputError(f"{path}: {exc}") from None
    if projection is None:
        origin = cfg.origin_point()
        if origin is None and stations:
            lats = [s.location.lat for s in stations]
            lons = [s.location.lon for s in stations]
            origin = GeoPoint((min(lats) + max(lats)) / 2, (min(lons) + max(lons)) / 2)
        projection = Projection(origin or GeoPoint(0.0, 0.0))
    pairs = pair_buffer_hours(obs, stations, projection, cfg.buffer_radius_m, cfg.tz_offset_s)
    if not pairs:
        log.warning("compare: no overlapping station/mobile hours; writing an empty report")
    reports = compare_all(pairs)
    out = Path(cfg.out_dir)
    write_metric_report_csv(out / "metrics.csv", reports)
    write_csv(
        out / "pairs.csv",
        ("station_id", "hour_start", "pollutant", "mobile", "fixed", "n_mobile"),
        ((p.station_id, p.hour_start, p.pollutant, repr(p.mobile), repr(p.fixed), p.n_mobile) for p in pairs),
    )
    for r in reports:
        log.info("compare %s %s: n=%d fb=%s nmse=%s flags=%s", r.station_id, r.pollutant, r.n_pairs, r.fb, r.nmse, r.flags())
    return reports


def cmd_synth(cfg: RunConfig, synth_kv: dict):
    try:
        scfg = SynthConfig.from_mapping(synth_kv)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"synth config: {exc}") from None
    out = Path(cfg.out_dir)
    roads = network_geo(scfg)
    write_roads_csv(out / "roads.csv", roads)
    obs, truth = gen_observations(scfg, gen_trajectories(scfg))
    write_observations_csv(out / "observations.csv", obs)
    write_ground_truth_csv(out / "ground_truth.csv", truth)
    write_stations_csv(out / "stations.csv", gen_stations(scfg))
    log.info("synth: %d observations from %d taxis, %d planted segments", len(obs), scfg.n_taxis, len(truth.planted))
    return scfg, obs, truth


def cmd_run_all(cfg: RunConfig, synth_kv: dict, synth: bool):
    out = Path(cfg.out_dir)
    if synth:
        cmd_synth(cfg, synth_kv)
        cfg.roads = str(out / "roads.csv")
        cfg.observations = str(out / "observations.csv")
        cfg.stations = str(out / "stations.csv")
    net = cmd_segment(cfg)
    snapped, _, _ = cmd_reduce(cfg, net)
    cmd_hotspots(cfg, net, snapped)
    if cfg.stations:
        cmd_compare(cfg, net.projection)


# --- argument parsing -----------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="taxiaq", description="Segment-level exposure maps and hotspots from taxi air-quality sensors.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="key = value settings file")
        sp.add_argument("--out-dir", dest="out_dir")
        sp.add_argument("--workers", type=int)
        sp.add_argument("--tz-offset-s", dest="tz_offset_s", type=int)
        sp.add_argument("--origin", help="projection origin 'lat,lon' or 'auto'")
        sp.add_argument("-v", "--verbose", action="store_true")

    def net_flags(sp):
        sp.add_argument("--segments")
        sp.add_argument("--roads")
        sp.add_argument("--target-len", dest="target_len_m", type=float)
        sp.add_argument("--cell-size-m", dest="cell_size_m", type=float)
        sp.add_argument("--max-snap-m", dest="max_snap_m", type=float)

    sp = sub.add_parser("segment", help="cut roads into 50-m segments")
    common(sp)
    sp.add_argument("--roads")
    sp.add_argument("--target-len", dest="target_len_m", type=float)

    sp = sub.add_parser("synth", help="generate a synthetic fleet and city")
    common(sp)
    sp.add_argument("--seed", type=int)

    sp = sub.add_parser("reduce", help="snap observations and compute hourly medians")
    common(sp)
    net_flags(sp)
    sp.add_argument("--observations")

    sp = sub.add_parser("compare", help="agreement metrics against fixed stations")
    common(sp)
    sp.add_argument("--observations")
    sp.add_argument("--stations")
    sp.add_argument("--buffer-radius-m", dest="buffer_radius_m", type=float)

    sp = sub.add_parser("hotspots", help="flag high-exposure segments")
    common(sp)
    net_flags(sp)
    sp.add_argument("--observations")
    sp.add_argument("--gap-s", dest="gap_s", type=int)
    sp.add_argument("--vms-days", dest="vms_days", type=int)
    sp.add_argument("--weighting", choices=("count", "duration"))

    sp = sub.add_parser("run-all", help="segment, reduce, hotspots and compare in one go")
    common(sp)
    net_flags(sp)
    sp.add_argument("--observations")
    sp.add_argument("--stations")
    sp.add_argument("--buffer-radius-m", dest="buffer_radius_m", type=float)
    sp.add_argument("--gap-s", dest="gap_s", type=int)
    sp.add_argument("--vms-days", dest="vms_days", type=int)
    sp.add_argument("--weighting", choices=("count", "duration"))
    sp.add_argument("--synth", action="store_true", help="generate inputs with the synth settings first")
    sp.add_argument("--seed", type=int)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg, synth_kv = resolve_config(args)
        log.debug("kernel backend: %s", BACKEND)
        if args.command == "segment":
            cmd_segment(cfg)
        elif args.command == "synth":
            cmd_synth(cfg, synth_kv)
        elif args.command == "reduce":
            cmd_reduce(cfg)
        elif args.command == "compare":
            cmd_compare(cfg)
        elif args.command == "hotspots":
            cmd_hotspots(cfg)
        elif args.command == "run-all":
            cmd_run_all(cfg, synth_kv, args.synth)
    except UsageError as exc:
        print(f"taxiaq: {exc}", file=sys.stderr)
        return 1
    except InputError as exc:
        print(f"taxiaq: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"taxiaq: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
