import csv
import json
import subprocess
import sys

import pytest

from taxiaq.cli import main
from taxiaq.network import polyline_length, read_segments_csv

WORLD = """\
# small city with one PM2.5 hotspot zone
seed = 11
rows = 4
cols = 4
spacing_m = 200
n_taxis = 12
duration_s = 1036800
sample_interval_s = 60
speed_mps = 8
zones = -100,-100,130,0,45,0
"""


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def world(tmp_path_factory):
    d = tmp_path_factory.mktemp("world")
    (d / "synth.conf").write_text(WORLD)
    assert main(["synth", "--config", str(d / "synth.conf"), "--out-dir", str(d)]) == 0
    assert main(["segment", "--roads", str(d / "roads.csv"), "--out-dir", str(d)]) == 0
    return d


def test_segment_writes_csv(world):
    rows = read_rows(world / "segments.csv")
    assert list(rows[0]) == ["segment_id", "road_class", "length_m", "wkt_linestring"]
    # 8 roads of 600 m at 50 m
    assert len(rows) == 96


def test_segment_target_len(world, tmp_path):
    assert main(["segment", "--roads", str(world / "roads.csv"), "--target-len", "25", "--out-dir", str(tmp_path)]) == 0
    net = read_segments_csv(tmp_path / "segments.csv")
    assert len(net.segments) == 192
    assert max(polyline_length(s.polyline) for s in net.segments) <= 25.5


def test_missing_file_exit_2(tmp_path, capsys):
    assert main(["segment", "--roads", str(tmp_path / "nope.csv"), "--out-dir", str(tmp_path)]) == 2
    assert "not found" in capsys.readouterr().err


def test_usage_errors_exit_1(tmp_path, capsys):
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == 1
    assert main(["segment", "--out-dir", str(tmp_path)]) == 1
    assert main(["reduce", "--workers", "0", "--segments", "x", "--observations", "y"]) == 1
    bad = tmp_path / "bad.conf"
    bad.write_text("colour = red\n")
    assert main(["segment", "--config", str(bad), "--roads", "x"]) == 1
    assert "unknown setting" in capsys.readouterr().err


def test_bad_observation_header_exit_2(world, tmp_path):
    obs = tmp_path / "obs.csv"
    obs.write_text("a,b,c\n1,2,3\n")
    rc = main(["reduce", "--segments", str(world / "segments.csv"), "--observations", str(obs), "--out-dir", str(tmp_path)])
    assert rc == 2


def test_empty_observations(world, tmp_path):
    obs = tmp_path / "obs.csv"
    obs.write_text("device_id,timestamp,lat,lon,no2_ppb,pm25_ugm3,pm10_ugm3,temp_c,rh_pct\n")
    rc = main(["reduce", "--segments", str(world / "segments.csv"), "--observations", str(obs), "--out-dir", str(tmp_path)])
    assert rc == 0
    assert (tmp_path / "estimates.csv").read_text().strip() == (
        "segment_id,hour_start,no2_ppb,pm25_ugm3,pm10_ugm3,n_no2,n_pm25,n_pm10"
    )
    assert json.loads((tmp_path / "reduce_report.json").read_text())["estimates"] == 0


def test_bad_lines_are_logged_not_fatal(world, tmp_path):
    src = (world / "observations.csv").read_text().splitlines()
    obs = tmp_path / "obs.csv"
    obs.write_text("\n".join(src[:200] + ["garbage,line"] + src[200:400] + [src[5].replace(",25.", ",-999.")]) + "\n")
    rc = main(["reduce", "--segments", str(world / "segments.csv"), "--observations", str(obs), "--out-dir", str(tmp_path)])
    assert rc == 0
    rep = json.loads((tmp_path / "reduce_report.json").read_text())["qa"]
    assert rep["unparseable"] == 1
    assert rep["n_input"] == 400 + 1 == rep["accepted"] + rep["rejected"] + rep["unparseable"]
    rejects = read_rows(tmp_path / "rejects.csv")
    assert rejects[0]["stage"] == "parse" and rejects[0]["line_no"] == "201"


def test_reduce_output_plausible(world, tmp_path):
    rc = main(["reduce", "--segments", str(world / "segments.csv"), "--observations", str(world / "observations.csv"),
               "--out-dir", str(tmp_path)])
    assert rc == 0
    rep = json.loads((tmp_path / "reduce_report.json").read_text())
    n_obs = 12 * 1036800 // 60
    assert rep["qa"]["n_input"] == n_obs
    assert rep["snap"]["snapped"] + rep["snap"]["rejected_beyond_max_snap"] == rep["qa"]["accepted"]
    est = read_rows(tmp_path / "estimates.csv")
    # at most one row per segment-hour
    assert 0 < len(est) <= 96 * 12 * 24
    assert sum(int(r["n_pm25"]) for r in est) == rep["snap"]["snapped"]
    gj = json.loads((tmp_path / "summaries.geojson").read_text())
    assert len(gj["features"]) == rep["segments_with_data"]


def _outputs(d, names):
    return {n: (d / n).read_bytes() for n in names}


@pytest.mark.parametrize("command, files", [
    ("reduce", ["estimates.csv", "summaries.csv", "summaries.geojson", "reduce_report.json"]),
    ("hotspots", ["hotspots.csv", "hotspots.geojson", "hotspots_report.json"]),
])
def test_worker_count_byte_identical(world, tmp_path, command, files):
    got = []
    for w in (1, 8):
        out = tmp_path / f"w{w}"
        rc = main([command, "--segments", str(world / "segments.csv"), "--observations", str(world / "observations.csv"),
                   "--workers", str(w), "--out-dir", str(out)])
        assert rc == 0
        got.append(_outputs(out, files))
    assert got[0] == got[1]


def test_hotspots_recover_planted(world, tmp_path):
    rc = main(["hotspots", "--segments", str(world / "segments.csv"), "--observations", str(world / "observations.csv"),
               "--out-dir", str(tmp_path)])
    assert rc == 0
    truth = read_rows(world / "ground_truth.csv")
    planted = {int(r["segment_id"]) for r in truth if r["is_planted_hotspot"] == "1"}
    assert planted
    hot = {int(r["segment_id"]) for r in read_rows(tmp_path / "hotspots.csv") if r["pollutant"] == "pm25" and r["is_hotspot"] == "1"}
    assert planted <= hot
    # anything else flagged must touch the zone edge
    for sid in hot - planted:
        assert sid in _boundary_ids(world)


def _boundary_ids(world):
    from taxiaq.synth import SynthConfig, build_network, zone_membership
    from taxiaq.cli import read_config_file

    cfg = SynthConfig.from_mapping(read_config_file(world / "synth.conf"))
    return zone_membership(cfg, build_network(cfg))[1]


def test_all_good_has_no_hotspots(tmp_path):
    conf = tmp_path / "c.conf"
    conf.write_text(WORLD.replace("zones = -100,-100,130,0,45,0", "base_pm25 = 5\namplitude_pm25 = 1\nnoise_pm25 = 0.5\n"
                                  "base_no2 = 10\nbase_pm10 = 20"))
    assert main(["run-all", "--synth", "--config", str(conf), "--out-dir", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "hotspots_report.json").read_text())
    assert rep["vms_segments"] > 0
    assert rep["hotspots"] == {"no2": 0, "pm25": 0, "pm10": 0}


def test_vms_days_flag(world, tmp_path):
    args = ["hotspots", "--segments", str(world / "segments.csv"), "--observations", str(world / "observations.csv")]
    assert main(args + ["--vms-days", "13", "--out-dir", str(tmp_path / "strict")]) == 0
    assert main(args + ["--vms-days", "1", "--out-dir", str(tmp_path / "loose")]) == 0
    strict = json.loads((tmp_path / "strict" / "hotspots_report.json").read_text())
    loose = json.loads((tmp_path / "loose" / "hotspots_report.json").read_text())
    # twelve simulated days can never satisfy a 13-day gate
    assert strict["vms_segments"] == 0 and strict["hotspots"]["pm25"] == 0
    assert loose["vms_segments"] >= 90 and loose["hotspots"]["pm25"] > 0


def test_config_file_and_flag_precedence(world, tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text(f"vms_days = 13\nsegments = {world / 'segments.csv'}\nobservations = {world / 'observations.csv'}\n")
    assert main(["hotspots", "--config", str(conf), "--out-dir", str(tmp_path / "a")]) == 0
    assert json.loads((tmp_path / "a" / "hotspots_report.json").read_text())["vms_days"] == 13
    assert main(["hotspots", "--config", str(conf), "--vms-days", "2", "--out-dir", str(tmp_path / "b")]) == 0
    assert json.loads((tmp_path / "b" / "hotspots_report.json").read_text())["vms_days"] == 2


def test_compare_reports_bands(world, tmp_path):
    rc = main(["compare", "--observations", str(world / "observations.csv"), "--stations", str(world / "stations.csv"),
               "--out-dir", str(tmp_path)])
    assert rc == 0
    rows = read_rows(tmp_path / "metrics.csv")
    assert rows
    for r in rows:
        assert {"fb_pass", "nmse_pass", "vg_pass", "fac2_pass"} <= set(r)
        # stations read 70 % of background, so the mobile side is biased high
        assert float(r["fb"]) > 0


def test_compare_without_overlap_warns(world, tmp_path, caplog):
    st = tmp_path / "st.csv"
    st.write_text("station_id,lat,lon,hour_start,no2_ppb,pm25_ugm3,pm10_ugm3\nX,10.0,10.0,1000,1,1,1\n")
    rc = main(["compare", "--observations", str(world / "observations.csv"), "--stations", str(st), "--out-dir", str(tmp_path)])
    assert rc == 0
    assert any("no overlapping" in r.getMessage() and r.levelname == "WARNING" for r in caplog.records)
    assert len(read_rows(tmp_path / "metrics.csv")) == 0


def test_synth_seed_determinism(tmp_path):
    conf = tmp_path / "s.conf"
    conf.write_text("rows = 3\ncols = 3\nspacing_m = 100\nn_taxis = 3\nduration_s = 600\n")
    files = ["roads.csv", "observations.csv", "ground_truth.csv", "stations.csv"]
    for name, seed in (("a", 1), ("b", 1), ("c", 2)):
        assert main(["synth", "--config", str(conf), "--seed", str(seed), "--out-dir", str(tmp_path / name)]) == 0
    a, b, c = (_outputs(tmp_path / n, files) for n in "abc")
    assert a == b
    assert a["observations.csv"] != c["observations.csv"]


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "taxiaq.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("taxiaq ")
