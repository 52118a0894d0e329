import csv
import json
import subprocess
import sys

import pytest

from conftest import scene
from skelcover.cli import main
from skelcover.io import write_ply


@pytest.fixture(scope="module")
def cloud_file(tmp_path_factory):
    p = tmp_path_factory.mktemp("cloud") / "tube.ply"
    write_ply(scene("y_tube", n=6000)[0], p)
    return p


def test_run_writes_report(cloud_file, tmp_path, capsys):
    assert main(["run", str(cloud_file), "--out", str(tmp_path), "--seed", "7"]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["seed"] == 7 and rep["trajectory_feasible"] is True
    assert "coverage (%)" in capsys.readouterr().out
    for name in ("trajectory.csv", "trajectory.json", "path.csv", "viewpoints.csv", "diagnostics.json"):
        assert (tmp_path / name).exists()


def test_stage_commands_stop_early(cloud_file, tmp_path):
    assert main(["skeletonize", str(cloud_file), "--out", str(tmp_path / "s")]) == 0
    assert (tmp_path / "s" / "skeleton.txt").exists() and not (tmp_path / "s" / "labels.txt").exists()
    assert main(["plan", str(cloud_file), "--out", str(tmp_path / "p"), "--mode", "NR"]) == 0
    assert (tmp_path / "p" / "path.csv").exists() and not (tmp_path / "p" / "trajectory.csv").exists()


def test_config_file_and_env(cloud_file, tmp_path, monkeypatch):
    cfg = tmp_path / "c.toml"
    cfg.write_text("K = 50\nrefine = false\n")
    monkeypatch.setenv("SKELCOVER_WORKERS", "2")
    assert main(["decompose", str(cloud_file), "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    text = (tmp_path / "o" / "config.toml").read_text()
    assert "K = 50" in text and "workers = 2" in text and "refine = false" in text


@pytest.mark.parametrize("argv", [["run", "/no/such/file.ply"], ["frobnicate"], ["run", "--scene", "blob"],
                                  ["run", "--scene", "cylinder", "--seed", "-3"],
                                  ["run", "--scene", "cylinder", "--workers", "0"]])
def test_invalid_input_exits_2(argv, capsys):
    assert main(argv) == 2


def test_bad_config_exits_2(tmp_path, cloud_file):
    cfg = tmp_path / "c.toml"
    cfg.write_text("nonsense = 1\n")
    assert main(["run", str(cloud_file), "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_runtime_failure_exits_1(tmp_path, cloud_file):
    cfg = tmp_path / "c.toml"
    cfg.write_text("start = [0.0, 0.0, 4.0]\n")   # the joint of the tube: inside the scene
    assert main(["plan", str(cloud_file), "--config", str(cfg), "--out", str(tmp_path)]) == 1
    assert (tmp_path / "viewpoints.csv").exists()


def test_bench_and_ablate(tmp_path, capsys):
    assert main(["bench", "--scenes", "cylinder", "--modes", "full", "NR", "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader(open(tmp_path / "bench.csv")))
    assert [r["mode"] for r in rows] == ["full", "NR"] and rows[0]["scene"] == "cylinder"
    assert main(["ablate", "--scene", "cylinder", "--modes", "full", "GO", "--out", str(tmp_path)]) == 0
    assert [r["mode"] for r in json.loads((tmp_path / "ablation.json").read_text())] == ["full", "GO"]


def test_console_entry_point_help():
    out = subprocess.run([sys.executable, "-m", "skelcover.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in ("skeletonize", "decompose", "viewpoints", "plan", "trajectory", "run", "bench", "ablate"):
        assert cmd in out.stdout
