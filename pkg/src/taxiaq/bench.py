"""Throughput benchmark for the snap and reduce stages.

Builds a synthetic city-scale workload in memory (a 37 x 37 grid at 500 m
spacing cut into about 26,600 segments, and a few million GPS-tagged
observations spread over two months) and times QA, snapping, hourly
medians and segment summaries. Fixture generation is not timed.

Run ``python -m taxiaq.bench --help`` for options. Results are printed as
JSON; peak memory is the process's maximum resident set size.
"""

from __future__ import annotations

import argparse
import json
import os
import resource
import sys
import time

import numpy as np

from .ingest import ObservationBatch, qa_filter
from .kernels import BACKEND
from .reduction import aggregate_hourly, snap_observations, summarize_segments
from .spatial import build_index
from .synth import SynthConfig, build_network

DEFAULT_N_OBS = 5_000_000
DEFAULT_GRID = 37
DEFAULT_DAYS = 60
N_TAXIS = 314


def make_workload(n_obs=DEFAULT_N_OBS, grid=DEFAULT_GRID, spacing_m=500.0, days=DEFAULT_DAYS, seed=0):
    """Network plus an observation batch scattered along its roads."""
    cfg = SynthConfig(rows=grid, cols=grid, spacing_m=spacing_m, seed=seed)
    net = build_network(cfg)
    rng = np.random.default_rng(seed)
    half = (grid - 1) / 2 * spacing_m
    line = rng.integers(0, 2 * grid, n_obs)
    along = rng.uniform(-half, half, n_obs)
    fixed = (line % grid - (grid - 1) / 2) * spacing_m
    horizontal = line < grid
    x = np.where(horizontal, along, fixed) + rng.normal(0, cfg.gps_sigma_m, n_obs)
    y = np.where(horizontal, fixed, along) + rng.normal(0, cfg.gps_sigma_m, n_obs)
    del line, along, fixed, horizontal
    lat, lon = cfg.projection.inverse(x, y)
    del x, y
    ts = np.sort(cfg.start_ts + rng.integers(0, days * 86400, n_obs))
    conc = np.round(rng.lognormal(np.log([[40.0], [30.0], [55.0]]), 0.5, (3, n_obs)), 1)
    batch = ObservationBatch(
        device=rng.integers(0, N_TAXIS, n_obs).astype(np.int32),
        device_names=[f"taxi{i:04d}" for i in range(N_TAXIS)],
        timestamp=ts,
        lat=np.round(lat, 6),
        lon=np.round(lon, 6),
        no2=conc[0], pm25=conc[1], pm10=conc[2],
        temp=np.full(n_obs, 22.0), rh=np.full(n_obs, 60.0),
    )
    return net, batch


def run_pipeline(net, batch, workers=1, kernel=None):
    """Time each stage; returns a dict of seconds and counts."""
    timings = {}
    t0 = time.perf_counter()
    accepted, _, report = qa_filter(batch)
    t1 = time.perf_counter()
    index = build_index(net.segments)
    t2 = time.perf_counter()
    snapped, n_far = snap_observations(accepted, index, net.projection, workers=workers, kernel=kernel)
    t3 = time.perf_counter()
    est = aggregate_hourly(snapped, workers=workers)
    t4 = time.perf_counter()
    summ = summarize_segments(est)
    t5 = time.perf_counter()
    timings.update(qa_s=t1 - t0, index_s=t2 - t1, snap_s=t3 - t2, aggregate_s=t4 - t3, summarize_s=t5 - t4, total_s=t5 - t0)
    return {
        **{k: round(v, 4) for k, v in timings.items()},
        "accepted": report.accepted,
        "snapped": len(snapped),
        "beyond_max_snap": n_far,
        "hourly_estimates": len(est),
        "segments_with_data": len(summ),
    }


def peak_rss_bytes():
    kb = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    return kb * 1024 if sys.platform.startswith("linux") else kb


def main(argv=None):
    p = argparse.ArgumentParser(prog="python -m taxiaq.bench", description=__doc__.splitlines()[0])
    p.add_argument("--n-obs", type=int, default=DEFAULT_N_OBS)
    p.add_argument("--grid", type=int, default=DEFAULT_GRID)
    p.add_argument("--days", type=int, default=DEFAULT_DAYS)
    p.add_argument("--workers", type=int, nargs="+", default=[1])
    p.add_argument("--kernel", choices=("cython", "python"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", help="also write the result to this file")
    args = p.parse_args(argv)

    t = time.perf_counter()
    net, batch = make_workload(args.n_obs, args.grid, days=args.days, seed=args.seed)
    setup = time.perf_counter() - t
    runs = {str(w): run_pipeline(net, batch, w, args.kernel) for w in args.workers}
    result = {
        "n_obs": len(batch),
        "n_segments": len(net.segments),
        "kernel": args.kernel or BACKEND,
        "cpu_count": os.cpu_count(),
        "setup_s": round(setup, 3),
        "runs": runs,
        "peak_rss_bytes": peak_rss_bytes(),
    }
    text = json.dumps(result, indent=2)
    print(text)
    if args.json:
        with open(args.json, "w") as fh:
            fh.write(text + "\n")
    return result


if __name__ == "__main__":
    main()
