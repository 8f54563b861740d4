"""Independent reference implementations used only by the tests.

Everything here is plain Python on lists, written without looking at the
vectorised code paths.
"""

import math


def point_piece_dist2(px, py, ax, ay, bx, by):
    dx = bx - ax
    dy = by - ay
    l2 = dx * dx + dy * dy
    if l2 > 0.0:
        t = ((px - ax) * dx + (py - ay) * dy) / l2
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
    else:
        t = 0.0
    ex = px - (ax + t * dx)
    ey = py - (ay + t * dy)
    return ex * ex + ey * ey


def point_polyline_dist(px, py, pts):
    best = math.inf
    for (ax, ay), (bx, by) in zip(pts[:-1], pts[1:]):
        best = min(best, point_piece_dist2(px, py, ax, ay, bx, by))
    return math.sqrt(best)


def brute_nearest(segments, px, py, max_dist):
    """Exhaustive scan: smallest distance, then smallest id; None beyond max_dist."""
    best = None
    for seg in segments:
        d = point_polyline_dist(px, py, seg.polyline.tolist())
        if best is None or d < best[1] or (d == best[1] and seg.segment_id < best[0]):
            best = (seg.segment_id, d)
    if best is None or best[1] > max_dist:
        return None
    return best


def sort_median(values):
    s = sorted(values)
    n = len(s)
    if n % 2:
        return s[n // 2]
    return (s[n // 2 - 1] + s[n // 2]) / 2


# inclusive upper bounds, one list per pollutant
_TABLE = {"no2": [50, 100, 150, 200], "pm25": [9.0, 35.4, 55.4, 125.4], "pm10": [54, 154, 254, 354]}


def level_of(value, pollutant):
    for i, upper in enumerate(_TABLE[pollutant]):
        if value <= upper:
            return i + 1
    return 4


def hotspot_walk(samples, gap_s=1800, vms_days=10, tz_offset_s=28800):
    """Per-sample loop over one segment's (t, {pollutant: value}) list, sorted by t.

    Returns (counters, dominant, valid_days, is_vms, is_hotspot), each keyed
    by pollutant where applicable.
    """
    counters = {p: [0, 0, 0, 0] for p in _TABLE}
    days = set()
    for j in range(1, len(samples)):
        t_prev, vals = samples[j - 1]
        if samples[j][0] - t_prev < gap_s:
            days.add((t_prev + tz_offset_s) // 86400)
            for p in _TABLE:
                counters[p][level_of(vals[p], p) - 1] += 1
    dominant = {}
    for p, c in counters.items():
        if sum(c) == 0:
            dominant[p] = None
            continue
        best = 0
        for i in range(4):
            if c[i] >= c[best]:
                best = i
        dominant[p] = best + 1
    is_vms = len(days) >= vms_days
    hot = {p: is_vms and dominant[p] is not None and dominant[p] >= 3 for p in _TABLE}
    return counters, dominant, len(days), is_vms, hot
