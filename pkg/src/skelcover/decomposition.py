"""Split a skeleton graph into straight-ish branches and carve the point cloud
into one subspace per branch."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .geometry import PointCloud
from .skeleton import SkeletonGraph

DEFAULT_DELTA = np.radians(45.0)


@dataclass
class Branch:
    id: int
    edges: list                 # (u, v) pairs in walk order
    reference: np.ndarray       # unit direction of the first edge

    @property
    def vertices(self) -> list:
        if not self.edges:
            return []
        return [self.edges[0][0]] + [v for _, v in self.edges]


@dataclass
class OrientedPoints:
    positions: np.ndarray
    directions: np.ndarray
    branch: np.ndarray

    def __len__(self):
        return len(self.positions)


@dataclass
class Subspace:
    id: int
    branch: Branch
    points: np.ndarray
    planes: OrientedPoints
    owners: np.ndarray          # index into ``planes`` for each entry of ``points``
    centroid: np.ndarray | None = field(default=None)


def undirected_angle(u, v) -> float:
    """Angle between two lines, in [0, pi/2]."""
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    c = abs(u @ v) / (np.linalg.norm(u) * np.linalg.norm(v))
    return float(np.arccos(min(1.0, c)))


def find_joints(graph: SkeletonGraph) -> list[int]:
    return [int(i) for i in np.flatnonzero(graph.degree() >= 3)]


def _walks(graph: SkeletonGraph) -> list[list[tuple]]:
    adj = graph.adjacency()
    deg = np.array([len(a) for a in adj])
    claimed = set()

    def key(u, v):
        return (u, v) if u < v else (v, u)

    def walk(start, first):
        path = [(start, first)]
        claimed.add(key(start, first))
        prev, cur = start, first
        while deg[cur] == 2:
            nxt = adj[cur][0] if adj[cur][1] == prev else adj[cur][1]
            if key(cur, nxt) in claimed:
                break
            claimed.add(key(cur, nxt))
            path.append((cur, nxt))
            prev, cur = cur, nxt
        return path

    walks = []
    for j in np.flatnonzero(deg >= 3):
        for nb in adj[j]:
            if key(j, nb) not in claimed:
                walks.append(walk(int(j), nb))
    total = len(graph.edges)
    while len(claimed) < total:
        open_v = sorted({v for i, j in graph.edges if key(int(i), int(j)) not in claimed for v in (int(i), int(j))})
        leaves = [v for v in open_v if deg[v] == 1]
        seed = leaves[0] if leaves else open_v[0]
        nb = next(w for w in adj[seed] if key(seed, w) not in claimed)
        walks.append(walk(seed, nb))
    return walks


def decompose_branches(graph: SkeletonGraph, delta: float = DEFAULT_DELTA) -> list[Branch]:
    if len(graph.vertices) == 0 or len(graph.edges) == 0:
        raise ValueError("empty graph")
    if not 0 < delta <= np.pi:
        raise ValueError("delta must lie in (0, pi]")
    V = graph.vertices
    out = []
    for path in _walks(graph):
        cur, ref = [], None
        for u, v in path:
            d = V[v] - V[u]
            if ref is not None and undirected_angle(d, ref) >= delta:
                out.append(Branch(len(out), cur, ref))
                cur, ref = [], None
            if ref is None:
                ref = d / np.linalg.norm(d)
            cur.append((u, v))
        out.append(Branch(len(out), cur, ref))
    return out


def discretize_branch(branch: Branch, vertices, step: float) -> OrientedPoints:
    if step <= 0:
        raise ValueError("step must be positive")
    V = np.asarray(vertices, float)
    pos, dirs = [], []
    for u, v in branch.edges:
        a, b = V[u], V[v]
        length = float(np.linalg.norm(b - a))
        if length == 0:
            continue
        t = np.arange(0.0, length, step)
        if length - t[-1] > 1e-9 * max(1.0, length):
            t = np.append(t, length)
        else:
            t[-1] = length
        d = (b - a) / length
        for s in t:
            p = a + s * d
            if pos and np.linalg.norm(pos[-1] - p) <= 1e-12:
                continue
            pos.append(p)
            dirs.append(d)
    pos = np.array(pos).reshape(-1, 3)
    return OrientedPoints(pos, np.array(dirs).reshape(-1, 3), np.full(len(pos), branch.id))


def allocate_space(cloud: PointCloud, branches: list[Branch], vertices, step: float,
                   slab_halfwidth: float | None = None, k_radius: int = 8,
                   plane_factor: float = 3.0) -> list[Subspace]:
    """Assign every cloud point to the branch of its nearest capturing plane."""
    if len(cloud) == 0:
        raise ValueError("empty input")
    slab = step if slab_halfwidth is None else slab_halfwidth
    planes = [discretize_branch(b, vertices, step) for b in branches]
    O = OrientedPoints(np.vstack([p.positions for p in planes]),
                       np.vstack([p.directions for p in planes]),
                       np.concatenate([p.branch for p in planes]))
    pts = cloud.points
    kk = min(k_radius, len(cloud))
    dk, _ = cloud.tree.query(O.positions, k=kk)
    r_plane = plane_factor * np.atleast_2d(dk.reshape(len(O), -1)).mean(axis=1)

    n = len(pts)
    best_d = np.full(n, np.inf)
    best_s = np.full(n, np.iinfo(np.int64).max)
    best_o = np.full(n, np.iinfo(np.int64).max)
    for i, ball in enumerate(cloud.tree.query_ball_point(O.positions, r_plane)):
        if not ball:
            continue
        ball = np.asarray(ball, np.int64)
        rel = pts[ball] - O.positions[i]
        inside = np.abs(rel @ O.directions[i]) <= slab
        idx = ball[inside]
        d = np.linalg.norm(rel[inside], axis=1)
        s = O.branch[i]
        better = (d < best_d[idx]) | ((d == best_d[idx]) & ((s < best_s[idx]) | ((s == best_s[idx]) & (i < best_o[idx]))))
        upd = idx[better]
        best_d[upd], best_s[upd], best_o[upd] = d[better], s, i

    lost = np.flatnonzero(np.isinf(best_d))
    if lost.size:
        tree = cKDTree(O.positions)
        k = min(4, len(O))
        dist, oi = tree.query(pts[lost], k=k)
        dist, oi = dist.reshape(len(lost), k), oi.reshape(len(lost), k)
        for r, q in enumerate(lost):
            # exact nearest; break ties by branch id then plane index
            cand = sorted(zip(np.linalg.norm(O.positions[oi[r]] - pts[q], axis=1), O.branch[oi[r]], oi[r]))
            best_s[q], best_o[q] = cand[0][1], cand[0][2]

    offsets = np.cumsum([0] + [len(p) for p in planes])
    subspaces = []
    for k, (b, pl) in enumerate(zip(branches, planes)):
        mine = np.flatnonzero(best_s == b.id)
        subspaces.append(Subspace(b.id, b, mine, pl, best_o[mine] - offsets[k]))
    return subspaces


def labels_of(subspaces: list[Subspace], n_points: int) -> np.ndarray:
    lab = np.full(n_points, -1, np.int64)
    for s in subspaces:
        lab[s.points] = s.id
    return lab


def write_labels(subspaces: list[Subspace], n_points: int, path) -> None:
    np.savetxt(path, labels_of(subspaces, n_points), fmt="%d")


def write_branch_table(subspaces: list[Subspace], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "edges", "points", "ref_x", "ref_y", "ref_z"])
        for s in subspaces:
            w.writerow([s.id, len(s.branch.edges), len(s.points), *np.round(s.branch.reference, 9)])
