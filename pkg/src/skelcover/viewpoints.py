"""Viewpoint sampling from skeleton rays and the merge loop that shrinks the
set while keeping the surface covered."""

from __future__ import annotations

import csv
import enum
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import _kernels as K
from .decomposition import Subspace
from .geometry import OccupancyGrid

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SensorModel:
    fov_h: float = math.radians(75.0)     # vertical full angle
    fov_w: float = math.radians(55.0)     # horizontal full angle
    dv: float = 4.0
    pitch_min: float = math.radians(-90.0)
    pitch_max: float = math.radians(70.0)

    def __post_init__(self):
        if not (0 < self.fov_h < math.pi and 0 < self.fov_w < math.pi):
            raise ValueError("field of view must lie in (0, pi)")
        if self.dv <= 0:
            raise ValueError("visible distance must be positive")
        if self.pitch_min > self.pitch_max:
            raise ValueError("empty gimbal range")


class State(enum.Enum):
    ACTIVE = "active"
    DORMANT = "dormant"


@dataclass
class Viewpoint:
    position: np.ndarray
    pitch: float
    yaw: float
    subspace: int
    covered: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    state: State = State.ACTIVE
    uid: int = -1

    @property
    def direction(self) -> np.ndarray:
        return view_direction(self.pitch, self.yaw)


@dataclass
class SamplingRay:
    start: np.ndarray
    direction: np.ndarray
    subspace: int


@dataclass
class ViewpointParams:
    D: float | None = None               # sampling distance; default 0.8 * dv
    clearance: float = 0.6
    max_rounds: int = 5
    icosphere_level: int = 2
    workers: int = 1

    def distance(self, sensor: SensorModel) -> float:
        return 0.8 * sensor.dv if self.D is None else self.D


@dataclass
class ViewpointResult:
    per_subspace: dict
    viewpoints: list
    initial_count: int
    coverable: np.ndarray           # mask over the occupied-voxel list
    covered: np.ndarray             # mask over the occupied-voxel list
    residual: int
    rounds: int
    discarded: int

    @property
    def coverage_rate(self) -> float:
        denom = int(self.coverable.sum())
        return 1.0 if denom == 0 else float((self.covered & self.coverable).sum()) / denom


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    w = math.remainder(a, 2 * math.pi)
    return math.pi if w == -math.pi else w


def view_direction(pitch: float, yaw: float) -> np.ndarray:
    return np.array([math.cos(pitch) * math.cos(yaw), math.cos(pitch) * math.sin(yaw), math.sin(pitch)])


def pose_from_ray(start, direction, D: float):
    """Viewpoint D along the ray, looking back at the start."""
    d = np.asarray(direction, float)
    d = d / np.linalg.norm(d)
    p = np.asarray(start, float) + D * d
    pitch = math.asin(max(-1.0, min(1.0, -d[2])))
    yaw = wrap_angle(math.atan2(-d[1], -d[0]))
    return p, pitch, yaw


def query_radius(sensor: SensorModel) -> float:
    return sensor.dv * math.tan(min(sensor.fov_h, sensor.fov_w) / 2)


def icosphere(level: int = 2) -> np.ndarray:
    t = (1 + 5 ** 0.5) / 2
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
             (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
             (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
             (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(v, float) / np.linalg.norm(v) for v in verts]
    for _ in range(level):
        cache = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return np.array(verts)


# ----------------------------------------------------------------- context

class _Scene:
    """Immutable arrays shared by every coverage query."""

    def __init__(self, grid: OccupancyGrid, sensor: SensorModel, params: ViewpointParams):
        self.grid = grid
        self.sensor = sensor
        self.params = params
        self.origin = grid.origin
        self.vs = grid.voxel_size
        self.dims = np.asarray(grid.dims, np.int64)
        self.states = grid.states
        self.blocked = np.ascontiguousarray(grid.blocked_mask(params.clearance))
        self.occ_idx = grid.occupied_indices
        self.occ_centers = grid.center_of(self.occ_idx)
        self.D = params.distance(sensor)

    def witness(self, dirs) -> np.ndarray:
        """Per occupied voxel, the first probe direction from which it can be
        seen by a valid viewpoint, or -1."""
        s = self.sensor
        return K.coverable_witness(self.origin, self.vs, self.dims, self.states, self.blocked,
                                   self.occ_centers, dirs, self.D, s.pitch_min, s.pitch_max)

    def valid(self, p) -> bool:
        return bool(K.position_valid(self.origin, self.vs, self.dims, self.states, self.blocked,
                                     np.asarray(p, float)))

    def cover(self, p, pitch, yaw) -> np.ndarray:
        s = self.sensor
        return K.coverage_one(self.origin, self.vs, self.states, self.occ_idx, self.occ_centers,
                              np.asarray(p, float), pitch, yaw, s.dv, s.fov_h / 2, s.fov_w / 2)

    def cover_all(self, vps: list[Viewpoint]) -> None:
        def job(vp):
            vp.covered = self.cover(vp.position, vp.pitch, vp.yaw)

        if self.params.workers > 1 and len(vps) > 1:
            with ThreadPoolExecutor(self.params.workers) as ex:
                list(ex.map(job, vps))
        else:
            for vp in vps:
                job(vp)

    def place(self, start, direction, subspace):
        """Sample a viewpoint on a ray, pulling it back towards the surface if
        the nominal spot is not flyable. Returns None if nothing works."""
        d = np.asarray(direction, float)
        d = d / np.linalg.norm(d)
        pitch = math.asin(max(-1.0, min(1.0, -d[2])))
        s = self.sensor
        if pitch < s.pitch_min or pitch > s.pitch_max:
            # keep the surface point on the optical axis at a reachable pitch
            pitch = min(max(pitch, s.pitch_min), s.pitch_max)
            yaw = math.atan2(-d[1], -d[0])
            d = -view_direction(pitch, yaw)
        travel = self.D
        while travel >= self.D / 2 - 1e-12:
            p, pt, yw = pose_from_ray(start, d, travel)
            if self.valid(p):
                return Viewpoint(p, pt, yw, subspace)
            travel -= self.vs / 2
        return None


# ----------------------------------------------------------------- steps

def label_internal_and_rays(grid: OccupancyGrid, subspaces: list[Subspace], cloud_points):
    """Returns (labelled grid, rays, count of rays that never met the surface)."""
    states = grid.states.copy()
    starts, ends, sub_of, plane_of = [], [], [], []
    for s in subspaces:
        if len(s.points) == 0:
            continue
        starts.append(s.planes.positions[s.owners])
        ends.append(np.asarray(cloud_points)[s.points])
        sub_of.append(np.full(len(s.points), s.id))
        plane_of.append(s.owners)
    if not starts:
        return grid.with_states(states), [], 0
    a = np.ascontiguousarray(np.vstack(starts))
    b = np.ascontiguousarray(np.vstack(ends))
    sub_of = np.concatenate(sub_of)
    plane_of = np.concatenate(plane_of)
    lo, hi = grid.origin, grid.upper
    inside = np.all((a >= lo) & (a < hi), axis=1) & np.all((b >= lo) & (b < hi), axis=1)
    t_hit = np.full(len(a), -1.0)
    t_hit[inside] = K.label_rays(grid.origin, grid.voxel_size, states, a[inside], b[inside])
    labelled = grid.with_states(states)

    hit = np.flatnonzero(t_hit >= 0)
    missed = len(a) - len(hit)
    sr = a[hit] + t_hit[hit, None] * (b[hit] - a[hit])
    dr = b[hit] - a[hit]
    norm = np.linalg.norm(dr, axis=1)
    ok = norm > 0
    hit, sr, dr = hit[ok], sr[ok], dr[ok] / norm[ok, None]
    missed += int((~ok).sum())

    # one ray per (subspace, plane, entry voxel); directions averaged
    vox = np.floor((sr - grid.origin) / grid.voxel_size).astype(np.int64)
    keys = np.column_stack([sub_of[hit], plane_of[hit], vox])
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.ravel()
    acc_sr = np.zeros((len(uniq), 3))
    acc_dr = np.zeros((len(uniq), 3))
    np.add.at(acc_sr, inv, sr)
    np.add.at(acc_dr, inv, dr)
    cnt = np.bincount(inv, minlength=len(uniq))[:, None]
    rays = []
    for k in range(len(uniq)):
        d = acc_dr[k]
        n = np.linalg.norm(d)
        if n < 1e-12:
            continue
        rays.append(SamplingRay(acc_sr[k] / cnt[k], d / n, int(uniq[k, 0])))
    return labelled, rays, missed


def sample_initial_viewpoints(rays: list[SamplingRay], D: float, grid: OccupancyGrid,
                              sensor: SensorModel, clearance: float = 0.6):
    """Returns (viewpoints, number discarded)."""
    if D <= 0:
        raise ValueError("D must be positive")
    scene = _Scene(grid, sensor, ViewpointParams(D=D, clearance=clearance))
    out, dropped = [], 0
    for r in rays:
        vp = scene.place(r.start, r.direction, r.subspace)
        if vp is None:
            dropped += 1
        else:
            vp.uid = len(out)
            out.append(vp)
    return out, dropped


def coverage_set(vp: Viewpoint, grid: OccupancyGrid, sensor: SensorModel) -> set:
    """Voxel indices (i, j, k) seen by the viewpoint."""
    occ = grid.occupied_indices
    hits = K.coverage_one(grid.origin, grid.voxel_size, grid.states, occ, grid.center_of(occ),
                          np.asarray(vp.position, float), vp.pitch, vp.yaw, sensor.dv,
                          sensor.fov_h / 2, sensor.fov_w / 2)
    return {tuple(int(x) for x in occ[h]) for h in hits}


def assign_voxels(covers) -> tuple[dict, list[int]]:
    """Give each voxel to its observer with the most coverage (lower index on
    ties). Returns (voxel -> viewpoint index, indices that own something)."""
    sizes = [len(c) for c in covers]
    owner = {}
    for i, c in enumerate(covers):
        for v in c:
            v = v if isinstance(v, tuple) else int(v)
            j = owner.get(v)
            if j is None or sizes[i] > sizes[j]:
                owner[v] = i
    kept = sorted(set(owner.values()))
    return owner, kept


def gravitate_update(vp_q: Viewpoint, neighbors: list[Viewpoint], grid: OccupancyGrid | None = None,
                     sensor: SensorModel | None = None, scene: _Scene | None = None):
    """Pull vp_q towards the weaker neighbours it absorbs. Returns
    (updated viewpoint, absorbed neighbours)."""
    c_q = len(vp_q.covered)
    used = [a for a in neighbors if a is not vp_q and len(a.covered) < c_q]
    p = vp_q.position.astype(float).copy()
    pitch, yaw = vp_q.pitch, vp_q.yaw
    for a in used:
        w = len(a.covered) / c_q
        p += w * (a.position - vp_q.position)
        pitch += w * (a.pitch - vp_q.pitch)
        yaw += w * wrap_angle(a.yaw - vp_q.yaw)
    yaw = wrap_angle(yaw)
    if scene is None and grid is not None and sensor is not None:
        scene = _Scene(grid, sensor, ViewpointParams())
    if scene is not None:
        lo, hi = scene.sensor.pitch_min, scene.sensor.pitch_max
        pitch = min(max(pitch, lo), hi)
        if not scene.valid(p):
            p = _repair_towards(scene, p, vp_q.position)
        # aim at the middle of everything this viewpoint is now responsible for
        targets = [vp_q.covered] + [a.covered for a in used]
        idx = np.unique(np.concatenate(targets)) if targets else np.empty(0, np.int64)
        if idx.size:
            aim = scene.occ_centers[idx].mean(axis=0) - p
            n = np.linalg.norm(aim)
            if n > 1e-9:
                aim /= n
                pitch = min(max(math.asin(max(-1.0, min(1.0, aim[2]))), lo), hi)
                yaw = wrap_angle(math.atan2(aim[1], aim[0]))
    out = Viewpoint(p, pitch, yaw, vp_q.subspace, vp_q.covered, vp_q.state, vp_q.uid)
    return out, used


def _repair_towards(scene: _Scene, p, fallback):
    """Walk from p towards the last valid position in half-voxel steps."""
    fallback = np.asarray(fallback, float)
    gap = fallback - p
    dist = float(np.linalg.norm(gap))
    if dist == 0:
        return fallback
    steps = int(math.ceil(dist / (scene.vs / 2)))
    for k in range(1, steps):
        q = p + gap * (k / steps)
        if scene.valid(q):
            return q
    return fallback


def _merge_round(scene: _Scene, vps: list[Viewpoint], r_q: float) -> list[Viewpoint]:
    """Coverage, voxel assignment, then one gravitation sweep. Returns the
    Active survivors."""
    scene.cover_all(vps)
    _, kept = assign_voxels([vp.covered for vp in vps])
    vps = [vps[i] for i in kept]
    if not vps:
        return []
    for vp in vps:
        vp.state = State.ACTIVE
    tree = cKDTree(np.array([vp.position for vp in vps]))
    order = sorted(range(len(vps)), key=lambda i: (-len(vps[i].covered), i))
    for i in order:
        q = vps[i]
        if q.state is State.DORMANT:
            continue
        near = sorted(tree.query_ball_point(q.position, r_q))
        cand = [vps[j] for j in near if j != i and vps[j].state is State.ACTIVE]
        new, used = gravitate_update(q, cand, scene=scene)
        vps[i] = new
        for a in used:
            a.state = State.DORMANT
    return [vp for vp in vps if vp.state is State.ACTIVE]


def generate_viewpoints(grid: OccupancyGrid, subspaces: list[Subspace], sensor: SensorModel,
                        rays: list[SamplingRay], params: ViewpointParams | None = None) -> ViewpointResult:
    """The full sample / assign / merge / resample loop on a labelled grid."""
    params = params or ViewpointParams()
    scene = _Scene(grid, sensor, params)
    r_q = query_radius(sensor)

    vp_ini, dropped = sample_initial_viewpoints(rays, scene.D, grid, sensor, params.clearance)
    for i, vp in enumerate(vp_ini):
        vp.uid = i
    ini_pos = np.array([vp.position for vp in vp_ini]).reshape(-1, 3)
    ini_sub = np.array([vp.subspace for vp in vp_ini], int)

    dirs = icosphere(params.icosphere_level)
    witness = scene.witness(dirs)
    coverable = witness >= 0

    ray_sr = np.array([r.start for r in rays]).reshape(-1, 3)
    ray_dr = np.array([r.direction for r in rays]).reshape(-1, 3)
    ray_tree = cKDTree(ray_sr) if len(rays) else None

    final: list[Viewpoint] = []
    batch = vp_ini
    covered = np.zeros(len(scene.occ_idx), bool)
    rounds = 0
    next_uid = len(vp_ini)
    while batch and rounds < params.max_rounds:
        rounds += 1
        final += _merge_round(scene, batch, r_q)
        scene.cover_all(final)
        covered[:] = False
        for vp in final:
            covered[vp.covered] = True
        todo = np.flatnonzero(coverable & ~covered)
        if todo.size == 0:
            break
        batch = []
        for v in todo:
            c = scene.occ_centers[v]
            vp = None
            if ray_tree is not None:
                _, k = ray_tree.query(c)
                vp = scene.place(c, ray_dr[k], -1)
                if vp is not None and v not in set(scene.cover(vp.position, vp.pitch, vp.yaw).tolist()):
                    vp = None
            if vp is None:
                vp = scene.place(c, dirs[witness[v]], -1)
            if vp is not None:
                vp.uid = next_uid
                next_uid += 1
                batch.append(vp)

    residual = int((coverable & ~covered).sum())
    if residual:
        log.warning("viewpoint loop stopped with %d coverable voxels unseen", residual)

    if len(ini_pos):
        _, near = cKDTree(ini_pos).query(np.array([vp.position for vp in final]).reshape(-1, 3))
        for vp, k in zip(final, np.atleast_1d(near)):
            vp.subspace = int(ini_sub[k])
    per = {}
    for vp in final:
        per.setdefault(vp.subspace, []).append(vp)
    return ViewpointResult(per, final, len(vp_ini), coverable, covered.copy(), residual, rounds, dropped)


def coverable_voxels(grid: OccupancyGrid, sensor: SensorModel, params: ViewpointParams | None = None) -> np.ndarray:
    """Mask over ``grid.occupied_indices`` of voxels some valid viewpoint can see."""
    scene = _Scene(grid, sensor, params or ViewpointParams())
    return scene.witness(icosphere(scene.params.icosphere_level)) >= 0


def write_viewpoints_csv(viewpoints: list[Viewpoint], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "x", "y", "z", "pitch_rad", "yaw_rad", "subspace", "covered_count"])
        for i, vp in enumerate(viewpoints):
            w.writerow([i, *(f"{x:.9g}" for x in vp.position), f"{vp.pitch:.9g}", f"{vp.yaw:.9g}",
                        vp.subspace, len(vp.covered)])
