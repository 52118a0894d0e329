"""Hierarchical coverage path: subspace order, boundary viewpoints, per-subspace
open tours solved in parallel, assembly and junction refinement."""

from __future__ import annotations

import csv
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import tsp
from .geometry import OccupancyGrid, PlanningError, SafePathResult, astar_path, polyline_length
from .viewpoints import Viewpoint

START_UID = -1


@dataclass(frozen=True)
class DynamicLimits:
    v_max: float = 2.0
    omega_max: float = 1.0
    a_max: float = 1.0
    j_max: float = 0.5

    def __post_init__(self):
        if min(self.v_max, self.omega_max, self.a_max, self.j_max) <= 0:
            raise ValueError("dynamic limits must be positive")


def ang(a1: float, a2: float) -> float:
    d = abs(a1 - a2) % (2 * math.pi)
    return min(d, 2 * math.pi - d)


def start_viewpoint(position, pitch: float = 0.0, yaw: float = 0.0) -> Viewpoint:
    return Viewpoint(np.asarray(position, float), pitch, yaw, -1, uid=START_UID)


class TravelCost:
    """Edge metric: the slowest of translation along the safe path and the two
    gimbal rotations. Safe paths are memoised per unordered viewpoint pair and
    always searched from the lower uid, so the metric is symmetric."""

    def __init__(self, grid: OccupancyGrid, limits: DynamicLimits, clearance: float):
        self.grid = grid
        self.limits = limits
        self.clearance = clearance
        self._memo: dict = {}
        self._lock = threading.Lock()
        self.searches = 0

    def path(self, a: Viewpoint, b: Viewpoint) -> SafePathResult:
        if a.uid == b.uid:
            return SafePathResult(a.position[None, :].copy(), 0.0, a.position[None, :].copy())
        lo, hi = (a, b) if a.uid < b.uid else (b, a)
        key = (lo.uid, hi.uid)
        res = self._memo.get(key)
        if res is None:
            try:
                res = astar_path(self.grid, lo.position, hi.position, self.clearance)
            except PlanningError as exc:
                raise PlanningError(f"unreachable viewpoint ({exc})") from exc
            with self._lock:
                self._memo.setdefault(key, res)
                self.searches += 1
                res = self._memo[key]
        if lo is a:
            return res
        return SafePathResult(res.waypoints[::-1].copy(), res.length,
                              None if res.raw is None else res.raw[::-1].copy())

    def length(self, a: Viewpoint, b: Viewpoint) -> float:
        return self.path(a, b).length

    def cost(self, a: Viewpoint, b: Viewpoint) -> float:
        lim = self.limits
        return max(self.length(a, b) / lim.v_max,
                   ang(a.pitch, b.pitch) / lim.omega_max,
                   ang(a.yaw, b.yaw) / lim.omega_max)


@dataclass
class CoveragePath:
    viewpoints: list
    segments: list
    total_length: float
    total_cost: float

    @property
    def uids(self) -> list:
        return [vp.uid for vp in self.viewpoints]

    def polyline(self) -> np.ndarray:
        if not self.segments:
            return np.array([vp.position for vp in self.viewpoints]).reshape(-1, 3)
        pts = [self.segments[0].waypoints[0]]
        for seg in self.segments:
            pts.extend(seg.waypoints[1:])
        return np.array(pts)


def build_path(order: list[Viewpoint], coster: TravelCost) -> CoveragePath:
    segs = [coster.path(a, b) for a, b in zip(order[:-1], order[1:])]
    cost = sum(coster.cost(a, b) for a, b in zip(order[:-1], order[1:]))
    return CoveragePath(list(order), segs, float(sum(s.length for s in segs)), float(cost))


# -------------------------------------------------------------- global level

def global_sequence(centroids, current_pose, seed: int = 0) -> list[int]:
    """Visit order (indices into ``centroids``) of an open tour from the pose."""
    C = np.asarray(centroids, float).reshape(-1, 3)
    if len(C) == 0:
        raise ValueError("no subspaces")
    if len(C) == 1:
        return [0]
    pts = np.vstack([np.asarray(current_pose, float), C])
    M = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
    M[:, 0] = 0.0
    tour = tsp.solve(tsp.CostMatrix(M, tsp.Semantics.CLOSED), seed=seed)
    return [k - 1 for k in tour.order[1:]]


def select_boundaries(anchors, groups: list[list[Viewpoint]]) -> list[tuple]:
    """anchors = [pose, centroid_1, ..., centroid_N] in visiting order; groups
    are the matching viewpoint lists. Returns (start, end) index pairs into each
    group; the last group has end None."""
    K = np.asarray(anchors, float)
    out = []
    for i, vps in enumerate(groups, start=1):
        P = np.array([vp.position for vp in vps]).reshape(-1, 3)
        s_score = np.sum((P - K[i - 1]) ** 2, axis=1) + np.sum((P - K[i]) ** 2, axis=1)
        start = int(np.argmin(s_score))
        if i == len(groups):
            out.append((start, None))
            continue
        e_score = np.sum((P - K[i]) ** 2, axis=1) + np.sum((P - K[i + 1]) ** 2, axis=1)
        rank = np.argsort(e_score, kind="stable")
        end = int(rank[0])
        if end == start and len(vps) >= 2:
            end = int(rank[1])
        out.append((start, end))
    return out


# -------------------------------------------------------------- local level

def local_cost_matrix(vps: list[Viewpoint], coster: TravelCost, last: bool = False) -> tsp.CostMatrix:
    """Start at index 0; unless ``last``, the end sits at index R-1 and may only
    return to the start, which forces it to close the open path."""
    R = len(vps)
    if R < 2:
        raise ValueError("need at least two viewpoints")
    M = np.zeros((R, R))
    for i in range(R):
        for j in range(1, R):
            if i == j:
                continue
            if not last and i == R - 1 and j < R - 1:
                M[i, j] = math.inf
            else:
                M[i, j] = coster.cost(vps[i], vps[j])
    return tsp.CostMatrix(M, tsp.Semantics.CLOSED)


def _local_order(vps: list[Viewpoint], bounds: tuple, coster: TravelCost, seed: int) -> list[Viewpoint]:
    start, end = bounds
    if len(vps) == 1:
        return [vps[0]]
    if end is None:
        rest = [v for k, v in enumerate(vps) if k != start]
        seq = [vps[start]] + rest
        last = True
    else:
        rest = [v for k, v in enumerate(vps) if k not in (start, end)]
        seq = [vps[start]] + rest + [vps[end]]
        last = False
    if len(seq) == 2:
        return seq
    M = local_cost_matrix(seq, coster, last=last)
    if not last:
        # the end row only leads back to the start: an open path to R-1
        M = tsp.CostMatrix(M.costs, tsp.Semantics.OPEN)
    tour = tsp.solve(M, seed=seed)
    return [seq[k] for k in tour.order]


def plan_local_paths(groups: list[list[Viewpoint]], bounds: list[tuple], coster: TravelCost,
                     seed: int = 0, workers: int = 1) -> list[list[Viewpoint]]:
    jobs = [(g, b, coster, seed + 7919 * k) for k, (g, b) in enumerate(zip(groups, bounds))]
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(lambda a: _local_order(*a), jobs))
    return [_local_order(*a) for a in jobs]


def assemble(pose: Viewpoint, locals_: list[list[Viewpoint]], coster: TravelCost) -> CoveragePath:
    order = [pose] + [vp for part in locals_ for vp in part]
    return build_path(order, coster)


# -------------------------------------------------------------- refinement

@dataclass
class RefineStats:
    accepted: int = 0
    tried: int = 0
    cost_before: float = 0.0
    cost_after: float = 0.0


def junction_points(branches, vertices) -> np.ndarray:
    count: dict = {}
    for b in branches:
        for v in set(b.vertices):
            count[v] = count.get(v, 0) + 1
    ids = sorted(v for v, c in count.items() if c >= 2)
    return np.asarray(vertices, float)[ids].reshape(-1, 3)


def refine_path(path: CoveragePath, junctions, r_jc: float, K: int, seed: int,
                coster: TravelCost) -> tuple[CoveragePath, RefineStats]:
    """Randomised segment reversal around junctions; a move is kept only if
    it strictly lowers the travel cost. First and last stops never move."""
    order = list(path.viewpoints)
    stats = RefineStats(cost_before=path.total_cost)
    Z = np.asarray(junctions, float).reshape(-1, 3)
    n = len(order)
    if K <= 0 or len(Z) == 0 or n < 4:
        stats.cost_after = path.total_cost
        return path, stats
    tree = cKDTree(np.array([vp.position for vp in order]))
    groups = []
    for z in Z:
        members = [order[k] for k in sorted(tree.query_ball_point(z, r_jc))]
        if len(members) >= 2:
            groups.append(members)
    if not groups:
        stats.cost_after = path.total_cost
        return path, stats
    pos = {vp.uid: k for k, vp in enumerate(order)}
    rng = np.random.default_rng(seed)
    c = coster.cost
    for it in range(K):
        V = groups[it % len(groups)]
        v1 = V[rng.integers(len(V))]
        i1 = pos[v1.uid]
        forward = bool(rng.integers(2))
        i2 = i1 + 1 if forward else i1 - 1
        if not 0 <= i2 < n:
            continue
        far = i2 + 1 if forward else i2 - 1
        banned = {v1.uid, order[i2].uid}
        if 0 <= far < n:
            banned.add(order[far].uid)
        pool = [v for v in V if v.uid not in banned]
        if not pool:
            continue
        v3 = pool[rng.integers(len(pool))]
        i3 = pos[v3.uid]
        a = min(i1, i2)
        b = i3 if forward else i3 - 1
        j, m = min(a, b), max(a, b)
        if j < 0 or m + 1 >= n or m - j < 2:
            continue
        stats.tried += 1
        delta = (c(order[j], order[m]) + c(order[j + 1], order[m + 1])
                 - c(order[j], order[j + 1]) - c(order[m], order[m + 1]))
        if delta < -1e-12:
            order[j + 1:m + 1] = order[j + 1:m + 1][::-1]
            for k in range(j + 1, m + 1):
                pos[order[k].uid] = k
            stats.accepted += 1
    out = build_path(order, coster)
    if out.total_cost > path.total_cost:
        # float summation order can differ; never hand back a worse path
        out = path
    stats.cost_after = out.total_cost
    return out, stats


# -------------------------------------------------------------- orchestration

@dataclass
class PlanResult:
    path: CoveragePath
    unrefined: CoveragePath
    sequence: list
    groups: list
    refine: RefineStats
    timings: dict = field(default_factory=dict)


def plan_hierarchical(per_subspace: dict, pose: Viewpoint, coster: TravelCost, junctions, r_jc: float,
                      K: int = 10000, seed: int = 0, workers: int = 1, refine: bool = True,
                      clock=None) -> PlanResult:
    import time
    clock = clock or time.perf_counter
    t = {}
    ids = sorted(per_subspace)
    if not ids:
        raise ValueError("no viewpoints to plan")
    groups = [sorted(per_subspace[i], key=lambda v: v.uid) for i in ids]
    if any(len(g) == 0 for g in groups):
        raise ValueError("empty subspace")
    t0 = clock()
    cents = np.array([np.mean([v.position for v in g], axis=0) for g in groups])
    seq = global_sequence(cents, pose.position, seed=seed)
    t["global"] = clock() - t0
    t0 = clock()
    ordered = [groups[k] for k in seq]
    anchors = np.vstack([pose.position, cents[seq]])
    bounds = select_boundaries(anchors, ordered)
    locals_ = plan_local_paths(ordered, bounds, coster, seed=seed, workers=workers)
    t["local"] = clock() - t0
    t0 = clock()
    pc = assemble(pose, locals_, coster)
    t["assemble"] = clock() - t0
    t0 = clock()
    if refine:
        pr, stats = refine_path(pc, junctions, r_jc, K, seed, coster)
    else:
        pr, stats = pc, RefineStats(0, 0, pc.total_cost, pc.total_cost)
    t["refine"] = clock() - t0
    return PlanResult(pr, pc, [ids[k] for k in seq], ordered, stats, t)


def plan_global(viewpoints: list[Viewpoint], pose: Viewpoint, coster: TravelCost, seed: int = 0,
                clock=None) -> PlanResult:
    """Ablation: one open tour over every viewpoint at once."""
    import time
    clock = clock or time.perf_counter
    t0 = clock()
    vps = sorted(viewpoints, key=lambda v: v.uid)
    nodes = [pose] + vps
    n = len(nodes)
    if n == 2:
        order = nodes
    else:
        M = np.zeros((n, n))
        for i in range(n):
            for j in range(1, n):
                if i != j:
                    M[i, j] = coster.cost(nodes[i], nodes[j])
        tour = tsp.solve(tsp.CostMatrix(M, tsp.Semantics.CLOSED), seed=seed)
        order = [nodes[k] for k in tour.order]
    pc = build_path(order, coster)
    return PlanResult(pc, pc, [], [vps], RefineStats(0, 0, pc.total_cost, pc.total_cost),
                      {"global": clock() - t0})


def write_path_csv(path: CoveragePath, out) -> None:
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "x", "y", "z", "pitch", "yaw", "subspace"])
        for k, vp in enumerate(path.viewpoints):
            w.writerow([k, *(f"{x:.9g}" for x in vp.position), f"{vp.pitch:.9g}", f"{vp.yaw:.9g}", vp.subspace])


def write_polyline(path: CoveragePath, out) -> None:
    np.savetxt(out, path.polyline(), fmt="%.9g", header="x y z", comments="")


def path_length_check(path: CoveragePath) -> float:
    """Independent recomputation of the stored length."""
    return float(sum(polyline_length(s.waypoints) for s in path.segments))
