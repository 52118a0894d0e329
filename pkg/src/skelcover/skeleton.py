"""Curve skeleton extraction from an oriented surface sample.

Each downsampled point gets a rotational-symmetry axis (the direction along
which the normals of a thin planar slab vary least) and a centre (the point
closest to all normal lines of that slab). The centres are smoothed, thinned,
linked into a graph and cleaned up.
"""

from __future__ import annotations

import heapq
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, minimum_spanning_tree
from scipy.spatial import cKDTree

from .geometry import PointCloud


@dataclass
class SkeletonParams:
    """Radii are in the unit-sphere frame, as multiples of ``leaf``."""

    leaf: float = 0.05
    normal_k: int = 16
    max_iters: int = 20
    tol_deg: float = 0.1
    slab: float = 0.5
    neigh: float = 5.0
    mls: float = 3.0
    link: float = 1.5
    edge: float = 3.0
    bridge: float = 10.0
    spur: float = 5.0        # leaf chains shorter than this are pruned
    joint_merge: float = 3.0
    cycle: float = 8.0       # minimum loop length a non-tree edge may close
    init: str = "neighborhood"  # or "fixed_axis"
    hook_deg: float = 30.0
    workers: int = 1

    def radius(self, name: str) -> float:
        return getattr(self, name) * self.leaf


@dataclass
class Transform:
    center: np.ndarray
    scale: float

    def apply(self, pts) -> np.ndarray:
        return (np.asarray(pts, float) - self.center) * self.scale

    def invert(self, pts) -> np.ndarray:
        return np.asarray(pts, float) / self.scale + self.center


@dataclass
class RosaPoint:
    position: np.ndarray
    orientation: np.ndarray
    source_index: int
    flagged: bool = False


@dataclass
class SkeletonGraph:
    vertices: np.ndarray
    edges: np.ndarray
    transform: Transform = field(default_factory=lambda: Transform(np.zeros(3), 1.0))
    max_edge: float = np.inf

    def degree(self) -> np.ndarray:
        deg = np.zeros(len(self.vertices), int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def adjacency(self) -> list[list[int]]:
        adj = [[] for _ in range(len(self.vertices))]
        for i, j in self.edges:
            adj[i].append(int(j))
            adj[j].append(int(i))
        for a in adj:
            a.sort()
        return adj

    def n_components(self) -> int:
        return _n_components(len(self.vertices), self.edges)

    def save(self, path) -> None:
        lines = [f"skeleton {len(self.vertices)} {len(self.edges)}"]
        lines += ["v %.17g %.17g %.17g" % tuple(v) for v in self.vertices]
        lines += [f"e {int(i)} {int(j)}" for i, j in self.edges]
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "SkeletonGraph":
        with open(path) as fh:
            head = fh.readline().split()
            if len(head) != 3 or head[0] != "skeleton":
                raise ValueError("not a skeleton file")
            nv, ne = int(head[1]), int(head[2])
            verts = [list(map(float, fh.readline().split()[1:])) for _ in range(nv)]
            edges = [list(map(int, fh.readline().split()[1:])) for _ in range(ne)]
        return cls(np.array(verts, float).reshape(-1, 3), np.array(edges, int).reshape(-1, 2))


def _n_components(n, edges) -> int:
    if n == 0:
        return 0
    e = np.asarray(edges, int).reshape(-1, 2)
    g = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
    return int(connected_components(g, directed=False)[0])


# ---------------------------------------------------------------- preprocessing

def normalize_cloud(cloud: PointCloud) -> tuple[PointCloud, Transform]:
    if len(cloud) == 0:
        raise ValueError("empty input")
    center = cloud.points.mean(axis=0)
    radius = float(np.max(np.linalg.norm(cloud.points - center, axis=1)))
    if radius <= 0 or not np.isfinite(radius):
        raise ValueError("degenerate cloud")
    tf = Transform(center, 1.0 / radius)
    return PointCloud(tf.apply(cloud.points), cloud.normals), tf


def _smallest_eigvecs(cov):
    _, vecs = np.linalg.eigh(cov)
    return vecs[..., :, 0]


def estimate_normals(cloud: PointCloud, k: int = 16) -> PointCloud:
    if k < 3:
        raise ValueError("insufficient neighborhood")
    if len(cloud) < k + 1:
        raise ValueError("insufficient neighborhood")
    _, idx = cloud.tree.query(cloud.points, k=k + 1)
    nb = cloud.points[idx]
    centroid = nb.mean(axis=1)
    d = nb - centroid[:, None, :]
    cov = np.einsum("nki,nkj->nij", d, d) / (k + 1)
    n = _smallest_eigvecs(cov)
    side = np.einsum("ni,ni->n", n, cloud.points - centroid)
    tie = np.abs(side) <= 1e-12
    n[side < 0] *= -1
    # flat neighbourhoods: no outward side, so fix the sign canonically
    n[tie] = _canonical_sign(n[tie])
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    return PointCloud(cloud.points, n)


def _canonical_sign(v):
    v = np.atleast_2d(v).copy()
    for row in v:
        nz = np.flatnonzero(np.abs(row) > 1e-12)
        if nz.size and row[nz[0]] < 0:
            row *= -1
    return v


def downsample(cloud: PointCloud, leaf: float) -> PointCloud:
    if leaf <= 0:
        raise ValueError("leaf must be positive")
    keys = np.floor(cloud.points / leaf).astype(np.int64)
    _, inv, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    m = len(counts)
    pts = np.zeros((m, 3))
    np.add.at(pts, inv, cloud.points)
    pts /= counts[:, None]
    normals = None
    if cloud.normals is not None:
        acc = np.zeros((m, 3))
        np.add.at(acc, inv, cloud.normals)
        norm = np.linalg.norm(acc, axis=1)
        bad = norm < 1e-9
        if bad.any():
            first = np.full(m, -1)
            first[inv[::-1]] = np.arange(len(inv))[::-1]
            acc[bad] = cloud.normals[first[bad]]
            norm[bad] = 1.0
        normals = acc / norm[:, None]
    return PointCloud(pts, normals)


# ------------------------------------------------------------------ per point

def initial_orientation(normal) -> np.ndarray:
    """Unit vector orthogonal to ``normal``: a fixed axis with the normal removed."""
    n = np.asarray(normal, float)
    ref = np.array([0.0, 0.0, 1.0]) if abs(n[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    v = ref - (ref @ n) * n
    return v / np.linalg.norm(v)


def _angle(u, v) -> float:
    return float(np.arccos(np.clip(abs(u @ v), -1.0, 1.0)))


def _least_varying(cov, prev):
    vals, vecs = np.linalg.eigh(cov)
    span = max(vals[-1], 1e-300)
    null = vecs[:, vals <= vals[0] + 1e-9 * span]
    if null.shape[1] > 1:
        # repeated smallest eigenvalue: stay as close to the previous axis as possible
        proj = null @ (null.T @ prev)
        nrm = np.linalg.norm(proj)
        v = proj / nrm if nrm > 1e-9 else null[:, 0]
    else:
        v = null[:, 0]
    return v / np.linalg.norm(v)


def _slab(points, ball, p, v, r_slab):
    return ball[np.abs((points[ball] - p) @ v) < r_slab]


def _normal_cov(normals):
    d = normals - normals.mean(axis=0)
    return d.T @ d / len(normals)


def rosa_orientation(p: int, cloud: PointCloud, v0, max_iters: int = 20, tol: float = np.radians(0.1),
                     r_slab: float = 0.025, r_neigh: float = 0.25, ball=None):
    """Return (axis, flagged, iterations, the slab the axis was computed from)."""
    if cloud.normals is None:
        raise ValueError("cloud has no normals")
    pts, nrm = cloud.points, cloud.normals
    centre = pts[p]
    if ball is None:
        ball = np.asarray(cloud.tree.query_ball_point(centre, r_neigh), dtype=np.int64)
    v = np.asarray(v0, float)
    v = v / np.linalg.norm(v)
    nb = _slab(pts, ball, centre, v, r_slab)
    if len(nb) < 3:
        return _fix_sign(v), True, 0, nb
    it = 0
    for it in range(1, max_iters + 1):
        new = _least_varying(_normal_cov(nrm[nb]), v)
        change = _angle(new, v)
        v = new
        if change < tol or it == max_iters:
            break
        nxt = _slab(pts, ball, centre, v, r_slab)
        if len(nxt) < 3:
            break
        nb = nxt
    return _fix_sign(v), False, it, nb


def _fix_sign(v):
    return _canonical_sign(v)[0]


def rosa_position(p: int, neighborhood, cloud: PointCloud):
    """Point nearest to all normal lines of the neighbourhood. Returns (x, flagged)."""
    nb = np.asarray(neighborhood, dtype=np.int64)
    if nb.size == 0:
        raise ValueError("empty neighborhood")
    q = cloud.points[nb]
    n = cloud.normals[nb]
    proj = np.eye(3)[None, :, :] - n[:, :, None] * n[:, None, :]
    A = proj.sum(axis=0)
    b = np.einsum("kij,kj->i", proj, q)
    vals = np.linalg.eigvalsh(A)
    if vals[0] <= 1e-6 * max(vals[-1], 1e-300):
        # all normal lines parallel: drop the centroid onto the line through p
        base = cloud.points[p]
        axis = n.mean(axis=0)
        axis /= np.linalg.norm(axis)
        return base + ((q.mean(axis=0) - base) @ axis) * axis, True
    return np.linalg.solve(A, b), False


def rosa_points(cloud: PointCloud, samples: PointCloud, params: SkeletonParams) -> list[RosaPoint]:
    """One rosa point per sample, neighbourhoods drawn from ``cloud``."""
    r_slab, r_neigh = params.radius("slab"), params.radius("neigh")
    tol = np.radians(params.tol_deg)
    balls = cloud.tree.query_ball_point(samples.points, r_neigh)
    src = cKDTree(cloud.points)
    _, anchor = src.query(samples.points)
    aug_pts = np.vstack([cloud.points, samples.points])
    aug = PointCloud(aug_pts, np.vstack([cloud.normals, samples.normals]))
    base = len(cloud)

    def one(i):
        ball = np.asarray(balls[i], dtype=np.int64)
        if ball.size == 0:
            ball = np.array([anchor[i]])
        if params.init == "fixed_axis" or ball.size < 3:
            v0 = initial_orientation(samples.normals[i])
        else:
            v0 = _least_varying(_normal_cov(cloud.normals[ball]), initial_orientation(samples.normals[i]))
        v, flag, _, nb = rosa_orientation(base + i, aug, v0, params.max_iters, tol, r_slab, r_neigh, ball=ball)
        if len(nb) == 0:
            nb = ball
        x, flag2 = rosa_position(base + i, nb, aug)
        return RosaPoint(x, v, i, flag or flag2)

    idx = range(len(samples))
    if params.workers > 1:
        with ThreadPoolExecutor(params.workers) as ex:
            return list(ex.map(one, idx))
    return [one(i) for i in idx]


# ------------------------------------------------------------------ graph

def mls_smooth(pos: np.ndarray, radius: float) -> np.ndarray:
    """Linear moving-least-squares: refit each point on its neighbours' line."""
    tree = cKDTree(pos)
    out = pos.copy()
    h2 = (radius / 2.0) ** 2
    for i, nb in enumerate(tree.query_ball_point(pos, radius)):
        if len(nb) < 3:
            continue
        q = pos[nb]
        w = np.exp(-np.sum((q - pos[i]) ** 2, axis=1) / h2)
        mean = (w[:, None] * q).sum(axis=0) / w.sum()
        d = q - mean
        cov = (w[:, None] * d).T @ d
        axis = np.linalg.eigh(cov)[1][:, -1]
        t = d @ axis
        denom = (w * t * t).sum()
        slope = (w[:, None] * t[:, None] * d).sum(axis=0) / denom if denom > 1e-18 else np.zeros(3)
        out[i] = mean + slope * ((pos[i] - mean) @ axis)
    return out


def decimate(pos: np.ndarray, radius: float) -> np.ndarray:
    """Greedy clustering in index order; each cluster becomes its mean."""
    tree = cKDTree(pos)
    taken = np.zeros(len(pos), bool)
    verts = []
    for i in range(len(pos)):
        if taken[i]:
            continue
        nb = [j for j in tree.query_ball_point(pos[i], radius) if not taken[j]]
        taken[nb] = True
        verts.append(pos[nb].mean(axis=0))
    return np.array(verts)


class _Support:
    """Tests whether a segment stays near the input surface."""

    def __init__(self, cloud: PointCloud, reach: float, step: float):
        self.tree = cloud.tree
        self.reach = reach
        self.step = step

    def ok(self, a, b) -> bool:
        n = max(2, int(np.ceil(np.linalg.norm(b - a) / self.step)) + 1)
        s = a + np.linspace(0, 1, n)[:, None] * (b - a)
        d, _ = self.tree.query(s)
        return bool(np.all(d <= self.reach))


def _graph_dist(adj, src, dst, cap):
    dist = {src: 0.0}
    heap = [(0.0, src)]
    while heap:
        d, u = heapq.heappop(heap)
        if u == dst:
            return d
        if d > cap or d > dist.get(u, np.inf):
            continue
        for v, w in adj[u].items():
            nd = d + w
            if nd < dist.get(v, np.inf):
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return np.inf


def _link(verts, support, params):
    r_edge = params.radius("edge")
    tree = cKDTree(verts)
    cand = sorted(tree.query_pairs(r_edge))
    lens = {(i, j): float(np.linalg.norm(verts[i] - verts[j])) for i, j in cand}
    valid = [(i, j) for i, j in cand if lens[(i, j)] > 0 and support.ok(verts[i], verts[j])]
    n = len(verts)
    adj = [dict() for _ in range(n)]
    if not valid:
        return adj
    e = np.array(valid)
    w = np.array([lens[p] for p in valid])
    mst = minimum_spanning_tree(coo_matrix((w, (e[:, 0], e[:, 1])), shape=(n, n))).tocoo()
    tree_edges = set()
    for i, j, d in zip(mst.row, mst.col, mst.data):
        i, j = int(min(i, j)), int(max(i, j))
        adj[i][j] = adj[j][i] = lens[(i, j)]
        tree_edges.add((i, j))
    # re-admit edges that close long loops (rings, not jitter triangles)
    cyc = params.radius("cycle")
    for (i, j) in sorted((p for p in valid if p not in tree_edges), key=lambda p: (lens[p], p)):
        if _graph_dist(adj, i, j, cyc) > cyc:
            adj[i][j] = adj[j][i] = lens[(i, j)]
    return adj


def _fragments(adj):
    n = len(adj)
    edges = [(i, j) for i in range(n) for j in adj[i] if i < j]
    e = np.array(edges, int).reshape(-1, 2)
    g = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
    return connected_components(g, directed=False)[1]


def _bridge_and_keep(verts, adj, comp_of_vertex, support, params):
    r_bridge = params.radius("bridge")
    while True:
        frag = _fragments(adj)
        best = None
        for c in np.unique(comp_of_vertex):
            members = np.flatnonzero(comp_of_vertex == c)
            fr = np.unique(frag[members])
            if len(fr) < 2:
                continue
            sub = verts[members]
            t = cKDTree(sub)
            for a, b in sorted(t.query_pairs(r_bridge)):
                u, v = members[a], members[b]
                if frag[u] == frag[v]:
                    continue
                d = float(np.linalg.norm(verts[u] - verts[v]))
                if (best is None or (d, u, v) < best) and support.ok(verts[u], verts[v]):
                    best = (d, int(u), int(v))
        if best is None:
            break
        d, u, v = best
        adj[u][v] = adj[v][u] = d
    frag = _fragments(adj)
    keep = np.zeros(len(verts), bool)
    for c in np.unique(comp_of_vertex):
        members = np.flatnonzero(comp_of_vertex == c)
        sizes = {}
        for m in members:
            sizes[frag[m]] = sizes.get(frag[m], 0) + 1
        biggest = min(sizes, key=lambda f: (-sizes[f], f))
        keep[members[frag[members] == biggest]] = True
    return keep


def _chain(adj, start, first):
    """Follow degree-2 vertices from start through first; returns the vertex list."""
    path = [start, first]
    while len(adj[path[-1]]) == 2:
        nxt = [v for v in adj[path[-1]] if v != path[-2]]
        if not nxt or nxt[0] == start:
            break
        path.append(nxt[0])
    return path


def _chain_len(verts, path):
    return float(np.sum(np.linalg.norm(np.diff(verts[path], axis=0), axis=1)))


def _prune_spurs(verts, adj, alive, limit):
    changed = True
    while changed:
        changed = False
        for leaf in range(len(adj)):
            if not alive[leaf] or len(adj[leaf]) != 1:
                continue
            path = _chain(adj, leaf, next(iter(adj[leaf])))
            end = path[-1]
            if len(adj[end]) < 3 or _chain_len(verts, path) >= limit:
                continue
            for a, b in zip(path[:-1], path[1:]):
                adj[a].pop(b, None)
                adj[b].pop(a, None)
            for v in path[:-1]:
                alive[v] = False
            changed = True


def _merge_joints(verts, adj, alive, limit):
    """Contract short chains that join two branching vertices."""
    changed = False
    for j in range(len(adj)):
        if not alive[j] or len(adj[j]) < 3:
            continue
        for first in sorted(adj[j]):
            path = _chain(adj, j, first)
            end = path[-1]
            if end == j or len(adj[end]) < 3 or _chain_len(verts, path) >= limit:
                continue
            group = path
            verts[j] = verts[group].mean(axis=0)
            for v in group[1:]:
                for w in list(adj[v]):
                    adj[w].pop(v, None)
                    if w not in group:
                        adj[j][w] = adj[w][j] = 0.0
                adj[v].clear()
                alive[v] = False
            for w in adj[j]:
                adj[j][w] = adj[w][j] = float(np.linalg.norm(verts[j] - verts[w]))
            changed = True
            break
    return changed


def _line_fit(pts):
    c = pts.mean(axis=0)
    d = np.linalg.eigh((pts - c).T @ (pts - c))[1][:, -1]
    return c, d


def _recenter_joints(verts, adj, alive, near, fit_count=5):
    """Move each joint to the point closest to its incident branch lines and
    drop the chain vertices that crowd it."""
    for j in range(len(adj)):
        if not alive[j] or len(adj[j]) < 3:
            continue
        chains = [_chain(adj, j, nb) for nb in sorted(adj[j])]
        lines = [_line_fit(verts[c[1:1 + fit_count]]) for c in chains if len(c) >= 3]
        if len(lines) < 2:
            continue
        A = np.zeros((3, 3))
        b = np.zeros(3)
        for c, d in lines:
            P = np.eye(3) - np.outer(d, d)
            A += P
            b += P @ c
        vals = np.linalg.eigvalsh(A)
        if vals[0] < 1e-3 * vals[-1]:
            continue
        x = np.linalg.solve(A, b)
        if np.linalg.norm(x - verts[j]) > 2 * near:
            continue
        verts[j] = x
        for c in chains:
            k = 1
            while k < len(c) - 1 and len(adj[c[k]]) == 2 and np.linalg.norm(verts[c[k]] - x) < near:
                k += 1
            for a, b_ in zip(c[:k], c[1:k + 1]):
                adj[a].pop(b_, None)
                adj[b_].pop(a, None)
            for v in c[1:k]:
                alive[v] = False
            adj[j][c[k]] = adj[c[k]][j] = float(np.linalg.norm(verts[c[k]] - x))


def _trim_hooks(verts, adj, alive, max_turn, fit_count=4):
    """Remove leaf vertices whose last edge bends away from the branch line."""
    changed = True
    while changed:
        changed = False
        for leaf in range(len(adj)):
            if not alive[leaf] or len(adj[leaf]) != 1:
                continue
            path = _chain(adj, leaf, next(iter(adj[leaf])))
            if len(path) < fit_count + 1:
                continue
            _, d = _line_fit(verts[path[1:1 + fit_count]])
            e = verts[path[0]] - verts[path[1]]
            cosang = abs(e @ d) / max(np.linalg.norm(e), 1e-300)
            if cosang < np.cos(max_turn):
                nb = path[1]
                adj[nb].pop(leaf, None)
                adj[leaf].clear()
                alive[leaf] = False
                changed = True


def _close_gaps(verts, adj, alive, support, reach, loop_min, max_turn=np.radians(60)):
    """Join two leaves that face each other across a short gap, if doing so
    closes a long loop (a ring broken by sampling)."""
    leaves = [v for v in range(len(adj)) if alive[v] and len(adj[v]) == 1]
    pairs = []
    for a in range(len(leaves)):
        for b in range(a + 1, len(leaves)):
            u, v = leaves[a], leaves[b]
            d = float(np.linalg.norm(verts[u] - verts[v]))
            if d < reach:
                pairs.append((d, u, v))
    for d, u, v in sorted(pairs):
        if len(adj[u]) != 1 or len(adj[v]) != 1:
            continue
        gap = (verts[v] - verts[u]) / d
        out_u = verts[u] - verts[next(iter(adj[u]))]
        out_v = verts[v] - verts[next(iter(adj[v]))]
        cu = out_u @ gap / max(np.linalg.norm(out_u), 1e-300)
        cv = -(out_v @ gap) / max(np.linalg.norm(out_v), 1e-300)
        if min(cu, cv) < np.cos(max_turn):
            continue
        if _graph_dist(adj, u, v, loop_min) <= loop_min or not support.ok(verts[u], verts[v]):
            continue
        adj[u][v] = adj[v][u] = d


def _cleanup(verts, adj, alive, params):
    for _ in range(len(verts)):
        _prune_spurs(verts, adj, alive, params.radius("spur"))
        if not _merge_joints(verts, adj, alive, params.radius("joint_merge")):
            break
    _recenter_joints(verts, adj, alive, params.radius("edge"))
    _trim_hooks(verts, adj, alive, np.radians(params.hook_deg))


def _input_components(cloud: PointCloud, radius: float) -> np.ndarray:
    pairs = np.array(sorted(cloud.tree.query_pairs(radius)), int).reshape(-1, 2)
    n = len(cloud)
    g = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    return connected_components(g, directed=False)[1]


def smooth_and_link(rosa: list[RosaPoint], cloud: PointCloud, params: SkeletonParams | None = None) -> SkeletonGraph:
    """Build the skeleton graph in the frame of ``cloud``."""
    params = params or SkeletonParams()
    if len(rosa) < 2:
        raise ValueError("skeleton collapsed")
    pos = np.array([r.position for r in rosa], float)
    pos = mls_smooth(pos, params.radius("mls"))
    verts = decimate(pos, params.radius("link"))
    if len(verts) < 2:
        raise ValueError("skeleton collapsed")
    support = _Support(cloud, params.radius("neigh"), params.leaf / 2)
    adj = _link(verts, support, params)

    coarse = downsample(PointCloud(cloud.points), params.leaf)
    comp = _input_components(coarse, params.radius("edge"))
    _, near = coarse.tree.query(verts)
    keep = _bridge_and_keep(verts, adj, comp[near], support, params)
    for v in np.flatnonzero(~keep):
        for w in list(adj[v]):
            adj[w].pop(v, None)
        adj[v].clear()

    alive = keep.copy()
    _cleanup(verts, adj, alive, params)
    _close_gaps(verts, adj, alive, support, 2 * params.radius("edge"), params.radius("cycle"))

    idx = np.flatnonzero(alive)
    if len(idx) < 2:
        raise ValueError("skeleton collapsed")
    remap = -np.ones(len(verts), int)
    remap[idx] = np.arange(len(idx))
    edges = sorted({(min(remap[i], remap[j]), max(remap[i], remap[j]))
                    for i in idx for j in adj[i] if alive[j] and i != j})
    return SkeletonGraph(verts[idx], np.array(edges, int).reshape(-1, 2), max_edge=params.radius("bridge"))


def extract_skeleton(cloud: PointCloud, params: SkeletonParams | None = None) -> SkeletonGraph:
    params = params or SkeletonParams()
    norm_cloud, tf = normalize_cloud(cloud)
    if norm_cloud.normals is None:
        norm_cloud = estimate_normals(norm_cloud, params.normal_k)
    samples = downsample(norm_cloud, params.leaf)
    rosa = rosa_points(norm_cloud, samples, params)
    g = smooth_and_link(rosa, norm_cloud, params)
    return SkeletonGraph(tf.invert(g.vertices), g.edges, tf, g.max_edge / tf.scale)
