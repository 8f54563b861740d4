"""Compiled vs pure-Python nearest-segment kernel on the same workload.

    python benchmarks/compare_kernels.py [--n-obs 200000] [--repeat 3]

Both kernels must return bit-identical ids and distances; the script exits
non-zero if they do not.
"""

import argparse
import sys
import time

import numpy as np

from taxiaq import kernels
from taxiaq.bench import make_workload
from taxiaq.spatial import build_index


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n-obs", type=int, default=200_000)
    p.add_argument("--grid", type=int, default=37)
    p.add_argument("--max-snap-m", type=float, default=100.0)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args()

    if "cython" not in kernels.AVAILABLE:
        print("compiled kernel not built; run `pip install -e . --no-build-isolation` first", file=sys.stderr)
        return 1

    net, batch = make_workload(args.n_obs, args.grid)
    index = build_index(net.segments)
    x, y = net.projection.forward(batch.lat, batch.lon)

    results = {}
    for name in ("cython", "python"):
        secs, out = best_of(lambda: index.nearest_many(x, y, args.max_snap_m, kernel=name), args.repeat)
        results[name] = (secs, out)
        print(f"{name:>7}: {secs:8.3f} s  {args.n_obs / secs / 1e6:7.2f} M points/s")

    (tc, (ic, dc)), (tp, (ip, dp)) = results["cython"], results["python"]
    same = ic.tobytes() == ip.tobytes() and dc.tobytes() == dp.tobytes()
    print(f"speedup: {tp / tc:.1f}x   identical: {same}   snapped: {int(np.count_nonzero(ic >= 0))}/{args.n_obs}")
    return 0 if same else 2


if __name__ == "__main__":
    sys.exit(main())
