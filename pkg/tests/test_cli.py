from __future__ import annotations

import json
import math
import sys

import numpy as np
import pytest
from PIL import Image

from lanesim.cli import main
from lanesim.data import DriveLog, save_drive_log
from lanesim.report import format_table, plot_offset
from lanesim.simloop import TRACE_COLUMNS


@pytest.fixture(scope="module")
def logs(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_logs")
    for track, seconds in (("sharp", "25"), ("straight", "10")):
        code = main([
            "synth", "--track", track, "--out", str(root / track), "--duration", seconds,
            "--supersample", "1", "--no-frames", "--noise-std-deg", "0",
        ])
        assert code == 0
    return root


def read(path):
    return json.loads(path.read_text())


def test_no_arguments_prints_usage_and_exits_1(capsys):
    assert main([]) == 1
    assert "usage" in capsys.readouterr().err


def test_unknown_flag_is_usage_error(capsys):
    assert main(["simulate", "--bogus"]) == 1
    assert "error" in capsys.readouterr().err


def test_version_exits_0(capsys):
    assert main(["--version"]) == 0


def test_missing_log_is_data_error(tmp_path):
    assert main(["simulate", "--log", str(tmp_path / "nope"), "--controller", "straight",
                 "--out", str(tmp_path / "run")]) == 2


def test_unknown_controller_is_usage_error(logs, tmp_path):
    assert main(["simulate", "--log", str(logs / "straight"), "--controller", "bogus",
                 "--out", str(tmp_path / "run")]) == 1


def test_slow_external_controller_exits_3(logs, tmp_path):
    spec = {
        "kind": "external",
        "options": {
            "command": [sys.executable, "-m", "lanesim.control.server", "--delay", "2", "--delay-after", "2"],
            "timeout": 0.3,
        },
    }
    path = tmp_path / "slow.json"
    path.write_text(json.dumps(spec))
    assert main(["simulate", "--log", str(logs / "straight"), "--controller", str(path),
                 "--out", str(tmp_path / "run"), "--jobs", "1", "--no-plots"]) == 3


def test_synth_writes_manifest_and_log(logs):
    manifest = read(logs / "sharp" / "run.json")
    assert manifest["subcommand"] == "synth"
    assert manifest["status"] == "ok"
    assert "manifest.csv" in manifest["outputs"]
    assert manifest["config"]["seed"] == manifest["seeds"]["seed"]


def test_straight_controller_scores_zero_on_sharp_turns(logs, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["simulate", "--log", str(logs / "sharp"), "--controller", "straight",
                 "--out", str(out), "--jobs", "1"]) == 0
    rep = read(out / "report.json")
    assert rep["overall"]["autonomy_pct"] <= 0.0
    assert rep["overall"]["recoveries"] > 0
    assert (out / "table.txt").read_text() in capsys.readouterr().out
    assert (out / "traces" / "000_sharp_turns.offset.png").is_file()
    manifest = read(out / "run.json")
    assert manifest["status"] == "ok" and manifest["inputs"]


def test_simulate_is_reproducible(logs, tmp_path):
    docs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["simulate", "--log", str(logs / "straight"), "--controller", "oracle",
                     "--out", str(out), "--jobs", "1", "--no-plots"]) == 0
        docs.append((out / "report.json").read_bytes())
        assert read(out / "report.json")["overall"]["autonomy_pct"] == 100.0
    assert docs[0] == docs[1]


def test_scenario_labels_must_match_logs(logs, tmp_path):
    assert main(["simulate", "--log", str(logs / "straight"), "--log", str(logs / "sharp"),
                 "--scenario-label", "a", "--scenario-label", "b", "--scenario-label", "c",
                 "--controller", "straight", "--out", str(tmp_path / "run")]) == 1


def test_stats_of_constant_angle_log_has_zero_std(tmp_path, noise_image, capsys):
    n = 120
    ids = np.arange(n)
    log = DriveLog(
        frame_ids=ids,
        timestamps=ids / 30.0,
        speed=np.full(n, 10.0),
        steering=np.full(n, math.radians(15.0)),
        blinker_left=np.zeros(n, dtype=bool),
        blinker_right=np.zeros(n, dtype=bool),
        frames=lambda fid: noise_image,
        name="constant",
    )
    save_drive_log(log, tmp_path / "log")
    out = tmp_path / "stats"
    assert main(["stats", "--log", str(tmp_path / "log"), "--policy", "original", "--out", str(out)]) == 0
    doc = read(out / "stats.json")
    assert doc["policies"]["original"]["std_deg"] == 0.0
    assert doc["policies"]["original"]["count"] == n
    assert "original" in capsys.readouterr().out


def test_augment_writes_labelled_samples(logs, tmp_path):
    out = tmp_path / "aug"
    assert main(["augment", "--log", str(logs / "straight"), "--out", str(out),
                 "--policy", "original", "--samples", "1"]) == 0
    lines = (out / "labels.csv").read_text().splitlines()
    assert lines[0].startswith("sample,frame_id,de")
    n = len(lines) - 1
    assert n > 0 and len(list((out / "frames").glob("*.png"))) == n
    # zero-noise straight road: the label is the pure correction term
    row = lines[1].split(",")
    de, dth, v = float(row[2]), math.radians(float(row[3])), float(row[4])
    label = math.radians(float(row[6]))
    assert label == pytest.approx(-12.0 / v * de - 5.3 * dth, abs=1e-9)


def test_augment_rejects_zero_samples(logs, tmp_path):
    assert main(["augment", "--log", str(logs / "straight"), "--out", str(tmp_path / "a"),
                 "--samples", "0"]) == 1


def test_sweep_ranks_grid_points(logs, tmp_path):
    out = tmp_path / "sweep"
    assert main(["sweep", "--log", str(logs / "straight"), "--controller", "oracle",
                 "--grid", "horizon_row=14.52,17.52", "--out", str(out), "--jobs", "1"]) == 0
    doc = read(out / "sweep.json")
    assert len(doc["rows"]) == 2
    assert {r["params"]["horizon_row"] for r in doc["rows"]} == {14.52, 17.52}


def test_sweep_rejects_bad_grid(logs, tmp_path):
    assert main(["sweep", "--log", str(logs / "straight"), "--grid", "horizon_row",
                 "--out", str(tmp_path / "s")]) == 1


def test_report_combines_runs(logs, tmp_path, capsys):
    runs = []
    for ctl in ("straight", "oracle"):
        out = tmp_path / ctl
        assert main(["simulate", "--log", str(logs / "sharp"), "--log", str(logs / "straight"),
                     "--scenario-label", "sharp", "--scenario-label", "straight",
                     "--controller", ctl, "--out", str(out), "--jobs", "1", "--no-plots"]) == 0
        runs.append(out)
    capsys.readouterr()
    dest = tmp_path / "report"
    assert main(["report", "--run", str(runs[0]), "--run", str(runs[1]), "--out", str(dest)]) == 0
    table = (dest / "table.txt").read_text()
    lines = table.splitlines()
    assert "sharp a% / MAD cm" in lines[0] and "straight a% / MAD cm" in lines[0]
    assert lines[2].startswith("oracle") and lines[3].startswith("straight")
    assert "100.0 / " in lines[2]
    assert (dest / "straight_000_sharp_turns.trajectory.png").is_file()
    assert read(dest / "run.json")["subcommand"] == "report"


def test_report_of_missing_run_is_data_error(tmp_path):
    assert main(["report", "--run", str(tmp_path / "nothing"), "--out", str(tmp_path / "r")]) == 2


def test_empty_scenario_list_gives_header_only_table():
    lines = format_table({}).splitlines()
    assert len(lines) == 2
    assert lines[0].startswith("controller")


def test_flagged_cell_is_marked():
    cell = {"autonomy_pct": -40.0, "mad_cm": 55.0, "flagged": True}
    table = format_table({"straight": {"scenarios": {"sharp": cell}, "overall": cell}})
    assert "-40.0* / 55.0" in table


def _dark_pixels(path) -> int:
    px = np.asarray(Image.open(path).convert("L"))
    return int((px < 40).sum())


def test_one_recovery_draws_a_marker(tmp_path):
    n = 300
    trace = {col: np.zeros(n) for col in TRACE_COLUMNS}
    trace["frame"] = np.arange(n, dtype=float)
    trace["de"] = np.linspace(0.0, 1.2, n)
    plain = plot_offset(trace, 1.0 / 30.0, tmp_path / "plain.png")
    trace["recovery"] = np.zeros(n)
    trace["recovery"][150] = 1.0
    marked = plot_offset(trace, 1.0 / 30.0, tmp_path / "marked.png")
    assert _dark_pixels(marked) > _dark_pixels(plain)
