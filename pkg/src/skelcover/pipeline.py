"""End-to-end runs, ablations and benchmark rows."""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from . import _kernels as K
from .config import PipelineConfig, dump_config
from .decomposition import allocate_space, decompose_branches, write_branch_table, write_labels
from .geometry import OccupancyGrid, PlanningError, PointCloud, build_grid
from .planner import (DynamicLimits, PlanResult, TravelCost, junction_points, plan_global,
                      plan_hierarchical, start_viewpoint, write_path_csv, write_polyline)
from .skeleton import SkeletonParams, extract_skeleton
from .trajectory import build_corridors, generate_trajectory, validate_trajectory, write_samples_csv
from .viewpoints import (SensorModel, ViewpointParams, coverable_voxels, generate_viewpoints,
                         label_internal_and_rays, query_radius, write_viewpoints_csv)

STAGES = ("skeleton", "decomposition", "viewpoints", "planning", "trajectory")
MODES = ("full", "NR", "GO")

REPORT_SCHEMA = {
    "type": "object",
    "required": ["viewpoint_number", "path_length_m", "exec_time_s", "coverage_rate_percent",
                 "comp_time_ms", "subspace_count"],
    "properties": {
        "viewpoint_number": {"type": "integer", "minimum": 0},
        "path_length_m": {"type": "number", "minimum": 0},
        "path_cost_s": {"type": "number", "minimum": 0},
        "exec_time_s": {"type": ["number", "null"], "minimum": 0},
        "coverage_rate_percent": {"type": "number", "minimum": 0, "maximum": 100},
        "comp_time_ms": {
            "type": "object",
            "properties": {s: {"type": "number", "minimum": 0} for s in STAGES + ("total",)},
            "required": ["total"],
            "additionalProperties": False,
        },
        "subspace_count": {"type": "integer", "minimum": 0},
        "mode": {"enum": list(MODES)},
        "seed": {"type": "integer", "minimum": 0},
        "trajectory_feasible": {"type": ["boolean", "null"]},
    },
    "additionalProperties": False,
}


class StageError(RuntimeError):
    """A stage failed; ``artifacts`` holds everything finished before it."""

    def __init__(self, stage: str, cause: Exception, artifacts: "Artifacts"):
        super().__init__(f"{stage} stage failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.artifacts = artifacts


class StageInputError(StageError, ValueError):
    """A stage rejected its input."""


@dataclass
class CoverageReport:
    viewpoint_number: int
    path_length_m: float
    exec_time_s: float | None
    coverage_rate_percent: float
    comp_time_ms: dict
    subspace_count: int
    path_cost_s: float = 0.0
    mode: str = "full"
    seed: int = 0
    trajectory_feasible: bool | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        jsonschema.validate(d, REPORT_SCHEMA)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_text(self) -> str:
        rows = [
            ("mode", self.mode),
            ("seed", str(self.seed)),
            ("subspaces", str(self.subspace_count)),
            ("viewpoints", str(self.viewpoint_number)),
            ("path length (m)", f"{self.path_length_m:.2f}"),
            ("path cost (s)", f"{self.path_cost_s:.2f}"),
            ("exec time (s)", "-" if self.exec_time_s is None else f"{self.exec_time_s:.2f}"),
            ("coverage (%)", f"{self.coverage_rate_percent:.2f}"),
        ]
        rows += [(f"comp {k} (ms)", f"{v:.1f}") for k, v in self.comp_time_ms.items()]
        w = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{w}}  {v:>12}" for k, v in rows) + "\n"


@dataclass
class Artifacts:
    cloud: PointCloud
    skeleton: object = None
    branches: list = None
    subspaces: list = None
    grid: OccupancyGrid = None
    sensor: SensorModel = None
    viewpoints: object = None
    plan: PlanResult = None
    corridor: object = None
    trajectory: object = None
    feasibility: object = None
    timings: dict = field(default_factory=dict)


def sensor_of(cfg: PipelineConfig) -> SensorModel:
    r = math.radians
    return SensorModel(r(cfg.fov_h_deg), r(cfg.fov_w_deg), cfg.dv, r(cfg.pitch_min_deg), r(cfg.pitch_max_deg))


def viewpoint_params(cfg: PipelineConfig) -> ViewpointParams:
    return ViewpointParams(cfg.D, cfg.clearance, cfg.max_rounds, cfg.icosphere_level, cfg.workers)


def limits_of(cfg: PipelineConfig) -> DynamicLimits:
    return DynamicLimits(cfg.v_max, cfg.omega_max, cfg.a_max, cfg.j_max)


def grid_padding(cfg: PipelineConfig) -> int:
    D = viewpoint_params(cfg).distance(sensor_of(cfg))
    return int(math.ceil((D + 2 * cfg.clearance) / cfg.voxel_size)) + 2


def compute_coverage_rate(viewpoints, grid: OccupancyGrid, sensor: SensorModel,
                          params: ViewpointParams | None = None) -> float:
    """Percentage of coverable occupied voxels seen by ``viewpoints``, recomputed from scratch."""
    if not viewpoints:
        return 0.0
    coverable = coverable_voxels(grid, sensor, params)
    if not coverable.any():
        return 100.0
    occ = grid.occupied_indices
    centers = grid.center_of(occ)
    seen = np.zeros(len(occ), bool)
    for vp in viewpoints:
        hit = K.coverage_one(grid.origin, grid.voxel_size, grid.states, occ, centers,
                             np.asarray(vp.position, float), vp.pitch, vp.yaw,
                             sensor.dv, sensor.fov_h / 2, sensor.fov_w / 2)
        seen[hit] = True
    return 100.0 * float((seen & coverable).sum()) / float(coverable.sum())


def default_start(grid: OccupancyGrid, cloud: PointCloud, clearance: float) -> np.ndarray:
    """Free cell nearest the low x/y grid corner, level with the lowest scene point."""
    z = grid.index_of(cloud.points[np.argmin(cloud.points[:, 2])])[2]
    free = np.argwhere(~grid.blocked_mask(clearance)[:, :, z])
    if len(free) == 0:
        raise PlanningError("no free start position")
    i, j = min(map(tuple, free), key=lambda ij: (ij[0] + ij[1], ij[0], ij[1]))
    return grid.center_of((i, j, z))


def _stage(art: Artifacts, name: str, fn):
    t0 = time.perf_counter()
    try:
        out = fn()
    except Exception as e:  # noqa: BLE001 - re-raised with the stage name attached
        art.timings[name] = 1000 * (time.perf_counter() - t0)
        kind = StageInputError if isinstance(e, ValueError) else StageError
        raise kind(name, e, art) from e
    art.timings[name] = 1000 * (time.perf_counter() - t0)
    return out


def prepare(cfg: PipelineConfig, cloud: PointCloud, until: str = "viewpoints") -> Artifacts:
    """Skeleton, decomposition and viewpoints (or a prefix of them)."""
    art = Artifacts(cloud)
    art.sensor = sensor_of(cfg)
    sp = SkeletonParams(leaf=cfg.leaf, workers=cfg.workers)
    art.skeleton = _stage(art, "skeleton", lambda: extract_skeleton(cloud, sp))
    if until == "skeleton":
        return art

    def decompose():
        art.branches = decompose_branches(art.skeleton, math.radians(cfg.delta_deg))
        return allocate_space(cloud, art.branches, art.skeleton.vertices, cfg.step)

    art.subspaces = _stage(art, "decomposition", decompose)
    if until == "decomposition":
        return art

    def views():
        grid = build_grid(cloud, cfg.voxel_size, grid_padding(cfg))
        art.grid, rays, _ = label_internal_and_rays(grid, art.subspaces, cloud.points)
        return generate_viewpoints(art.grid, art.subspaces, art.sensor, rays, viewpoint_params(cfg))

    art.viewpoints = _stage(art, "viewpoints", views)
    return art


def plan(cfg: PipelineConfig, art: Artifacts, mode: str = "full") -> PlanResult:
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    start = cfg.start if cfg.start is not None else default_start(art.grid, art.cloud, cfg.clearance)
    pose = start_viewpoint(np.asarray(start, float))
    coster = TravelCost(art.grid, limits_of(cfg), cfg.clearance)
    vr = art.viewpoints
    if mode == "GO":
        return plan_global(vr.viewpoints, pose, coster, seed=cfg.seed)
    r_jc = cfg.r_jc if cfg.r_jc is not None else 2 * query_radius(art.sensor)
    Z = junction_points(art.branches, art.skeleton.vertices)
    return plan_hierarchical(vr.per_subspace, pose, coster, Z, r_jc, K=cfg.K, seed=cfg.seed,
                             workers=cfg.workers, refine=cfg.refine and mode == "full")


def run_pipeline(cfg: PipelineConfig, cloud: PointCloud, out_dir=None, mode: str = "full",
                 until: str = "trajectory") -> tuple[Artifacts, CoverageReport | None]:
    if until not in STAGES:
        raise ValueError(f"unknown stage {until!r}")
    t_all = time.perf_counter()
    art = Artifacts(cloud)
    try:
        art = prepare(cfg, cloud, until if until in STAGES[:3] else "viewpoints")
        if STAGES.index(until) >= 3:
            art.plan = _stage(art, "planning", lambda: plan(cfg, art, mode))
        if until == "trajectory" and cfg.trajectory:
            def traj():
                art.corridor = build_corridors(art.plan.path, art.grid, cfg.clearance)
                tr = generate_trajectory(art.corridor, limits_of(cfg))
                art.feasibility = validate_trajectory(tr, art.corridor, limits_of(cfg))
                return tr
            art.trajectory = _stage(art, "trajectory", traj)
    except StageError as e:
        if out_dir is not None:
            write_exports(e.artifacts, cfg, out_dir)
        raise
    report = None
    if art.plan is not None:
        report = make_report(cfg, art, mode, 1000 * (time.perf_counter() - t_all))
    if out_dir is not None:
        write_exports(art, cfg, out_dir, report)
    return art, report


def make_report(cfg: PipelineConfig, art: Artifacts, mode: str, total_ms: float) -> CoverageReport:
    path = art.plan.path
    vps = [vp for vp in path.viewpoints if vp.uid >= 0]
    rate = compute_coverage_rate(vps, art.grid, art.sensor, viewpoint_params(cfg))
    comp = {k: float(v) for k, v in art.timings.items()}
    comp["total"] = float(total_ms)
    return CoverageReport(
        viewpoint_number=len(vps),
        path_length_m=float(path.total_length),
        exec_time_s=None if art.trajectory is None else art.trajectory.total_time,
        coverage_rate_percent=rate,
        comp_time_ms=comp,
        subspace_count=len(art.subspaces),
        path_cost_s=float(path.total_cost),
        mode=mode,
        seed=int(cfg.seed),
        trajectory_feasible=None if art.feasibility is None else bool(art.feasibility.passed),
    )


def write_exports(art: Artifacts, cfg: PipelineConfig, out_dir, report: CoverageReport | None = None) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def put(name, fn):
        p = out / name
        fn(p)
        written.append(p)

    put("config.toml", lambda p: p.write_text(dump_config(cfg)))
    if art.skeleton is not None:
        put("skeleton.txt", art.skeleton.save)
    if art.subspaces is not None:
        put("labels.txt", lambda p: write_labels(art.subspaces, len(art.cloud), p))
        put("branches.csv", lambda p: write_branch_table(art.subspaces, p))
    if art.grid is not None:
        put("grid.bin", art.grid.save)
    if art.viewpoints is not None:
        put("viewpoints.csv", lambda p: write_viewpoints_csv(art.viewpoints.viewpoints, p))
    if art.plan is not None:
        put("path.csv", lambda p: write_path_csv(art.plan.path, p))
        put("path_polyline.txt", lambda p: write_polyline(art.plan.path, p))
        put("diagnostics.json", lambda p: p.write_text(json.dumps(diagnostics(art), indent=2)))
    if art.trajectory is not None:
        put("trajectory.csv", lambda p: write_samples_csv(art.trajectory, p, cfg.sample_rate))
        put("trajectory.json", lambda p: p.write_text(art.trajectory.to_json()))
    if report is not None:
        put("report.json", lambda p: p.write_text(report.to_json()))
        put("report.txt", lambda p: p.write_text(report.to_text()))
    return written


def diagnostics(art: Artifacts) -> dict:
    pr = art.plan
    per = {str(k): len(v) for k, v in sorted(art.viewpoints.per_subspace.items())}
    d = {
        "stage_ms": {k: float(v) for k, v in art.timings.items()},
        "planner_ms": {k: 1000 * float(v) for k, v in pr.timings.items()},
        "viewpoints_per_subspace": per,
        "initial_viewpoints": art.viewpoints.initial_count,
        "cost_before_refinement": float(pr.unrefined.total_cost),
        "cost_after_refinement": float(pr.path.total_cost),
        "refinement_moves": {"tried": pr.refine.tried, "accepted": pr.refine.accepted},
        "subspace_sequence": [int(s) for s in pr.sequence],
    }
    if art.feasibility is not None:
        f = asdict(art.feasibility)
        d["trajectory"] = {k: (float(v) if isinstance(v, (float, np.floating)) else v) for k, v in f.items()}
    return d


def run_ablation(cfg: PipelineConfig, cloud: PointCloud, modes=MODES) -> list[dict]:
    """Shared front half, then each planning mode timed on a cold cost cache."""
    bad = [m for m in modes if m not in MODES]
    if bad:
        raise ValueError(f"unknown modes: {bad}")
    art = prepare(cfg, cloud)
    rows = []
    for m in modes:
        t0 = time.perf_counter()
        pr = plan(cfg, art, m)
        ms = 1000 * (time.perf_counter() - t0)
        rows.append({"mode": m, "comp_time_ms": ms, "path_cost_s": float(pr.path.total_cost),
                     "path_length_m": float(pr.path.total_length),
                     "viewpoint_number": len(pr.path.viewpoints) - 1})
    return rows


def format_table(rows: list[dict]) -> str:
    if not rows:
        return ""
    keys = list(rows[0])
    cells = [[f"{r[k]:.2f}" if isinstance(r[k], float) else str(r[k]) for k in keys] for r in rows]
    w = [max(len(k), *(len(c[i]) for c in cells)) for i, k in enumerate(keys)]
    lines = ["  ".join(k.rjust(w[i]) for i, k in enumerate(keys))]
    lines += ["  ".join(c[i].rjust(w[i]) for i in range(len(keys))) for c in cells]
    return "\n".join(lines) + "\n"


BENCH_FIELDS = ["scene", "mode", "seed", "subspaces", "viewpoints", "path_length_m", "path_cost_s",
                "exec_time_s", "coverage_rate_percent", "comp_time_ms"]


def bench(cfg: PipelineConfig, scenes, modes, seeds, out_csv=None, with_trajectory: bool = False) -> list[dict]:
    """One row per (scene, mode, seed)."""
    from .scenes import synth_scene

    rows = []
    for scene in scenes:
        for seed in seeds:
            cloud, _ = synth_scene(scene, seed=seed)
            c = cfg.replace(seed=seed, trajectory=with_trajectory)
            for m in modes:
                _, rep = run_pipeline(c, cloud, mode=m)
                rows.append({"scene": scene, "mode": m, "seed": seed, "subspaces": rep.subspace_count,
                             "viewpoints": rep.viewpoint_number, "path_length_m": rep.path_length_m,
                             "path_cost_s": rep.path_cost_s, "exec_time_s": rep.exec_time_s,
                             "coverage_rate_percent": rep.coverage_rate_percent,
                             "comp_time_ms": rep.comp_time_ms["total"]})
    if out_csv is not None:
        with open(out_csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, BENCH_FIELDS)
            w.writeheader()
            w.writerows(rows)
    return rows
