import numpy as np
import pytest

from taxiaq.hotspot import ExposureLevel, get_level
from taxiaq.ingest import qa_filter
from taxiaq.network import ROAD_CLASSES, build_segments, polyline_length
from taxiaq.synth import (
    HotspotZone,
    SynthConfig,
    background,
    build_network,
    diurnal_shape,
    gen_network,
    gen_observations,
    gen_stations,
    gen_trajectories,
    true_concentration,
    zone_membership,
)

QUIET = dict(noise_sigma={"no2": 0.0, "pm25": 0.0, "pm10": 0.0},
             diurnal_amplitude={"no2": 0.0, "pm25": 0.0, "pm10": 0.0})


def test_two_by_two_grid():
    net = gen_network(SynthConfig(rows=2, cols=2, spacing_m=100))
    assert len(net) == 4
    assert sum(polyline_length(p) for _, p in net) == 400.0


def test_ten_by_ten_grid():
    net = gen_network(SynthConfig(rows=10, cols=10, spacing_m=500))
    assert len(net) == 20
    assert all(polyline_length(p) == 4500.0 for _, p in net)
    assert [c for c, _ in net[:6]] == list(ROAD_CLASSES) + [ROAD_CLASSES[0]]
    assert len(build_segments(net[:1])) == 90


def test_invalid_config():
    with pytest.raises(ValueError):
        SynthConfig(rows=1)
    with pytest.raises(ValueError):
        SynthConfig(gps_sigma_m=-1)
    with pytest.raises(ValueError):
        SynthConfig(n_taxis=0)


def test_default_scale_position_count():
    cfg = SynthConfig()
    assert cfg.n_taxis == 314 and cfg.sample_interval_s == 10 and cfg.gps_sigma_m == 10.0
    trs = gen_trajectories(cfg)
    assert sum(tr.t.size for tr in trs) == 113_040


def test_steps_follow_the_walk():
    cfg = SynthConfig(rows=6, cols=6, spacing_m=200, n_taxis=5, duration_s=2000, speed_mps=10)
    xs = (np.arange(6) - 2.5) * 200
    for tr in gen_trajectories(cfg):
        # 100 m steps along the walk; at a corner the chord is shorter
        step = np.hypot(np.diff(tr.x), np.diff(tr.y))
        assert np.all(step <= 100 + 1e-9)
        straight = (np.diff(tr.x) == 0) | (np.diff(tr.y) == 0)
        assert np.allclose(step[straight], 100.0)
        # every point lies on a grid line
        on_v = np.isclose(tr.x[:, None], xs[None, :], atol=1e-9).any(axis=1)
        on_h = np.isclose(tr.y[:, None], xs[None, :], atol=1e-9).any(axis=1)
        assert np.all(on_v | on_h)
        assert np.all(np.abs(tr.x) <= 500 + 1e-9) and np.all(np.abs(tr.y) <= 500 + 1e-9)
        assert np.all(np.diff(tr.t) == 10)


def test_trajectories_deterministic():
    cfg = SynthConfig(n_taxis=4, seed=7)
    a, b = gen_trajectories(cfg), gen_trajectories(cfg)
    for x, y in zip(a, b):
        assert x.x.tobytes() == y.x.tobytes() and x.t.tobytes() == y.t.tobytes()
    c = gen_trajectories(SynthConfig(n_taxis=4, seed=8))
    assert any(x.x.tobytes() != y.x.tobytes() for x, y in zip(a, c))


def test_zero_noise_equals_base():
    cfg = SynthConfig(n_taxis=3, duration_s=600, **QUIET)
    batch, _ = gen_observations(cfg, gen_trajectories(cfg))
    for p in ("no2", "pm25", "pm10"):
        assert np.all(batch.pollutant(p) == cfg.base[p])


def test_zone_elevation_reaches_unhealthy():
    cfg = SynthConfig(base={"no2": 40.0, "pm25": 30.0, "pm10": 40.0}, zones=[(0, 0, 100, {"pm25": 40.0})], **QUIET)
    inside = true_concentration(cfg, "pm25", 10.0, 0.0, cfg.start_ts)
    outside = true_concentration(cfg, "pm25", 500.0, 0.0, cfg.start_ts)
    assert float(inside) == 70.0 and float(outside) == 30.0
    assert get_level(70.0, "pm25") is ExposureLevel.UNHEALTHY


def test_noise_mean_is_zero():
    n = 100_000
    cfg = SynthConfig(n_taxis=1, duration_s=n * 10, diurnal_amplitude=QUIET["diurnal_amplitude"],
                      noise_sigma={"no2": 0.0, "pm25": 4.0, "pm10": 0.0}, base={"no2": 40.0, "pm25": 200.0, "pm10": 40.0})
    batch, _ = gen_observations(cfg, gen_trajectories(cfg))
    resid = batch.pm25 - 200.0
    assert batch.pm25.size == n
    # rounding to 0.1 adds at most 0.05 bias in a worst case; it averages out
    assert abs(resid.mean()) < 3 * 4.0 / np.sqrt(n)
    assert resid.std() == pytest.approx(4.0, rel=0.02)


def test_diurnal_shapes():
    h = np.arange(0, 24, 0.25)
    pm = diurnal_shape("pm25", h)
    no2 = diurnal_shape("no2", h)
    assert h[np.argmax(pm)] in (9.0, 19.0)
    assert pm[h == 9.0][0] == pytest.approx(1.0) and pm[h == 19.0][0] == pytest.approx(1.0)
    assert h[np.argmin(no2)] == 12.0 and h[np.argmax(no2)] == 18.0
    assert np.all((no2 >= 0) & (no2 <= 1)) and np.all((pm >= 0) & (pm <= 1))


def test_background_uses_local_time():
    cfg = SynthConfig()
    morning_local = cfg.start_ts + 9 * 3600
    assert background(cfg, "pm25", morning_local) == pytest.approx(cfg.base["pm25"] + cfg.diurnal_amplitude["pm25"])


def test_observations_sorted_and_pass_qa():
    cfg = SynthConfig(n_taxis=20, duration_s=1800)
    batch, truth = gen_observations(cfg, gen_trajectories(cfg))
    key = batch.timestamp * 1000 + batch.device
    assert np.all(np.diff(key) > 0)
    acc, rej, rep = qa_filter(batch)
    assert len(rej) == 0 and rep.is_balanced()
    assert np.all(batch.pm25 >= 0)
    assert truth.true_mean.shape == (3, truth.segment_id.size)


def test_full_determinism():
    cfg = SynthConfig(n_taxis=10, duration_s=900, seed=3, zones=[(0, 0, 300, {"pm25": 50})])
    a, ta = gen_observations(cfg, gen_trajectories(cfg))
    b, tb = gen_observations(cfg, gen_trajectories(cfg))
    for col in ("timestamp", "lat", "lon", "no2", "pm25", "pm10", "temp", "rh"):
        assert getattr(a, col).tobytes() == getattr(b, col).tobytes()
    assert ta.true_mean.tobytes() == tb.true_mean.tobytes() and ta.planted == tb.planted


def test_zone_membership_split():
    cfg = SynthConfig(rows=3, cols=3, spacing_m=200, zones=[HotspotZone(0, 0, 120, {"pm25": 50})])
    net = build_network(cfg)
    planted, boundary = zone_membership(cfg, net)
    assert planted and boundary and not planted & boundary
    for sid in planted:
        pts = net.segments[sid].polyline
        assert np.all(np.hypot(pts[:, 0], pts[:, 1]) <= 120)
    for sid in boundary:
        pts = net.segments[sid].polyline
        assert np.any(np.hypot(pts[:, 0], pts[:, 1]) > 120)


def test_planted_truth_elevated():
    cfg = SynthConfig(rows=4, cols=4, spacing_m=200, n_taxis=40, duration_s=3600,
                      zones=[HotspotZone(-100, -100, 150, {"no2": 0, "pm25": 45, "pm10": 0})])
    batch, truth = gen_observations(cfg, gen_trajectories(cfg))
    col = dict(zip(truth.segment_id.tolist(), truth.true_mean[1].tolist()))
    for sid in truth.planted & set(col):
        assert col[sid] >= cfg.base["pm25"] + 45


def test_from_mapping():
    cfg = SynthConfig.from_mapping({"seed": "5", "n_taxis": "12", "base_pm25": "30", "zones": "0,0,100,0,40,0; 10,10,50,1,2,3"})
    assert cfg.seed == 5 and cfg.n_taxis == 12 and cfg.base["pm25"] == 30.0
    assert len(cfg.zones) == 2 and cfg.zones[0].elevation["pm25"] == 40.0
    with pytest.raises(ValueError):
        SynthConfig.from_mapping({"colour": "red"})
    with pytest.raises(ValueError):
        SynthConfig.from_mapping({"zones": "1,2,3"})


def test_stations():
    cfg = SynthConfig(duration_s=7200, n_stations=3)
    st = gen_stations(cfg)
    assert len(st) == 6 and {s.station_id for s in st} == {"S1", "S2", "S3"}
    assert all(s.pm25 > 0 for s in st)
    assert gen_stations(SynthConfig(n_stations=0)) == []
