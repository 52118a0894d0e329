import json
import math

import numpy as np
import pytest

from conftest import empty_grid, full_run, scene
from skelcover.config import PipelineConfig
from skelcover.geometry import PointCloud, VoxelState
from skelcover.pipeline import (STAGES, CoverageReport, StageError, StageInputError, compute_coverage_rate,
                                run_ablation, run_pipeline)
from skelcover.viewpoints import SensorModel, ViewpointParams, Viewpoint, coverage_set

SMALL = {"n": 6000}


def test_cylinder_end_to_end():
    art, rep = full_run("cylinder")
    assert rep.coverage_rate_percent >= 95 and rep.subspace_count >= 1
    assert set(STAGES) <= set(rep.comp_time_ms) and rep.comp_time_ms["total"] > 0
    assert rep.trajectory_feasible is True
    assert rep.exec_time_s == pytest.approx(art.trajectory.total_time)
    assert rep.viewpoint_number == len(art.viewpoints.viewpoints)


def test_y_tube_exercises_junctions():
    art, rep = full_run("y_tube")
    assert rep.subspace_count >= 3
    assert art.plan.refine.tried > 0
    assert art.plan.path.total_cost <= art.plan.unrefined.total_cost


def test_path_visits_every_viewpoint_once():
    art, _ = full_run("y_tube")
    uids = [v.uid for v in art.plan.path.viewpoints[1:]]
    assert sorted(uids) == sorted(v.uid for v in art.viewpoints.viewpoints)
    assert art.plan.path.viewpoints[0].uid == -1


def test_report_schema_and_text():
    _, rep = full_run("cylinder")
    d = json.loads(rep.to_json())
    assert d["mode"] == "full" and 0 <= d["coverage_rate_percent"] <= 100
    text = rep.to_text()
    assert "coverage (%)" in text and "comp total (ms)" in text
    bad = CoverageReport(-1, 0.0, None, 50.0, {"total": 1.0}, 1)
    with pytest.raises(Exception):
        bad.to_dict()


def test_coverage_rate_examples():
    grid = empty_grid((30, 30, 30), 0.3, (-4.5, -4.5, -4.5))
    grid.states[14:16, 14:16, 14:16] = VoxelState.OCCUPIED
    sensor = SensorModel()
    params = ViewpointParams(clearance=0.3)
    assert compute_coverage_rate([], grid, sensor, params) == 0.0
    c = grid.center_of((15, 15, 15)) - 0.15
    ring = []
    for k in range(8):
        a = 2 * math.pi * k / 8
        p = c + 2.0 * np.array([math.cos(a), math.sin(a), 0.0])
        ring.append(Viewpoint(p, 0.0, math.atan2(c[1] - p[1], c[0] - p[0]), 0))
    assert compute_coverage_rate(ring, grid, sensor, params) == pytest.approx(100.0)


def test_dropping_a_sole_observer_lowers_coverage():
    art, rep = full_run("cylinder")
    vps = art.viewpoints.viewpoints
    covers = [coverage_set(v, art.grid, art.sensor) for v in vps]
    params = ViewpointParams(clearance=PipelineConfig().clearance)
    for k, own in enumerate(covers):
        others = set().union(*(c for j, c in enumerate(covers) if j != k))
        if own - others:
            lower = compute_coverage_rate(vps[:k] + vps[k + 1:], art.grid, art.sensor, params)
            assert lower < rep.coverage_rate_percent
            return
    pytest.fail("every voxel is seen twice")


def test_stage_failure_keeps_partial_exports(tmp_path):
    with pytest.raises(StageError) as info:
        run_pipeline(PipelineConfig(), PointCloud(np.ones((20, 3))), out_dir=tmp_path)
    assert info.value.stage == "skeleton" and isinstance(info.value, StageInputError)
    assert (tmp_path / "config.toml").exists() and not (tmp_path / "skeleton.txt").exists()
    # a start pose on the surface cannot be planned from
    cloud, _ = scene("cylinder", **SMALL)
    with pytest.raises(StageError) as info:
        run_pipeline(PipelineConfig(start=[1.0, 0.0, 5.0]), cloud, out_dir=tmp_path / "late")
    assert info.value.stage == "planning" and info.value.artifacts.viewpoints is not None
    assert (tmp_path / "late" / "viewpoints.csv").exists() and not (tmp_path / "late" / "path.csv").exists()


def test_partial_stages(tmp_path):
    cloud, _ = scene("cylinder", **SMALL)
    art, rep = run_pipeline(PipelineConfig(), cloud, out_dir=tmp_path, until="decomposition")
    assert rep is None and art.viewpoints is None
    assert sorted(p.name for p in tmp_path.iterdir()) == ["branches.csv", "config.toml", "labels.txt",
                                                          "skeleton.txt"]
    assert len((tmp_path / "labels.txt").read_text().split()) == len(cloud)
    with pytest.raises(ValueError):
        run_pipeline(PipelineConfig(), cloud, until="nope")


def test_identical_runs_write_identical_files(tmp_path):
    cloud, _ = scene("y_tube", **SMALL)
    cfg = PipelineConfig(seed=3)
    run_pipeline(cfg, cloud, out_dir=tmp_path / "a")
    run_pipeline(cfg, cloud, out_dir=tmp_path / "b")
    names = ["viewpoints.csv", "path.csv", "path_polyline.txt", "trajectory.csv", "trajectory.json",
             "labels.txt", "branches.csv", "skeleton.txt", "grid.bin"]
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes(), n
    diag = json.loads((tmp_path / "a" / "diagnostics.json").read_text())
    assert diag["cost_after_refinement"] <= diag["cost_before_refinement"]


def test_ablation_modes():
    cloud, _ = scene("y_tube", **SMALL)
    rows = {r["mode"]: r for r in run_ablation(PipelineConfig(trajectory=False), cloud)}
    assert set(rows) == {"full", "NR", "GO"}
    assert rows["NR"]["path_cost_s"] >= rows["full"]["path_cost_s"]
    assert len({r["viewpoint_number"] for r in rows.values()}) == 1
    with pytest.raises(ValueError):
        run_ablation(PipelineConfig(), cloud, ["XX"])
