"""Compiled inner loops for voxel traversal, visibility and grid search.

Traversal is parameterised exactly: the crossing parameter of every voxel
boundary is computed directly from the segment endpoints instead of being
accumulated, so walking a segment from either end visits the same voxels in
exactly reversed order. Bidirectional casting relies on that.
"""

import heapq
import math

import numpy as np
from numba import njit

FREE = 0
OCCUPIED = 1
INTERNAL = 2


@njit(cache=True, nogil=True)
def voxel_of(origin, vs, p):
    out = np.empty(3, np.int64)
    for k in range(3):
        out[k] = int(math.floor((p[k] - origin[k]) / vs))
    return out


@njit(cache=True, nogil=True)
def _crossing_t(origin, vs, a, b, ia, step, k, m):
    # parameter in [0, 1] where the segment crosses the m-th boundary on axis k
    if step[k] > 0:
        bound = origin[k] + (ia[k] + m + 1) * vs
    else:
        bound = origin[k] + (ia[k] - m) * vs
    return (bound - a[k]) / (b[k] - a[k])


@njit(cache=True, nogil=True)
def _setup(origin, vs, a, b):
    ia = voxel_of(origin, vs, a)
    ib = voxel_of(origin, vs, b)
    step = np.zeros(3, np.int64)
    n = np.zeros(3, np.int64)
    for k in range(3):
        d = ib[k] - ia[k]
        if d > 0:
            step[k] = 1
            n[k] = d
        elif d < 0:
            step[k] = -1
            n[k] = -d
    return ia, ib, step, n


@njit(cache=True, nogil=True)
def _next_forward(origin, vs, a, b, ia, step, n, m):
    best = -1
    best_t = np.inf
    for k in range(3):
        if m[k] < n[k]:
            t = _crossing_t(origin, vs, a, b, ia, step, k, m[k])
            if t < best_t:
                best_t = t
                best = k
    return best, best_t


@njit(cache=True, nogil=True)
def _next_backward(origin, vs, a, b, ia, step, r):
    # r[k] is the index of the last not-yet-undone crossing on axis k
    best = -1
    best_t = -np.inf
    for k in range(3):
        if r[k] >= 0:
            t = _crossing_t(origin, vs, a, b, ia, step, k, r[k])
            if t >= best_t:
                best_t = t
                best = k
    return best, best_t


@njit(cache=True, nogil=True)
def traverse(origin, vs, a, b):
    """All voxels pierced by segment a->b, with the entry parameter of each."""
    ia, ib, step, n = _setup(origin, vs, a, b)
    total = n[0] + n[1] + n[2]
    vox = np.empty((total + 1, 3), np.int64)
    tin = np.empty(total + 1)
    cur = ia.copy()
    vox[0] = cur
    tin[0] = 0.0
    m = np.zeros(3, np.int64)
    for s in range(total):
        k, t = _next_forward(origin, vs, a, b, ia, step, n, m)
        m[k] += 1
        cur[k] += step[k]
        vox[s + 1] = cur
        tin[s + 1] = t
    return vox, tin


@njit(cache=True, nogil=True)
def raycast_first(origin, vs, states, a, b):
    """Index into the traversal of the first Occupied voxel (-1 if none) and
    the number of voxels read."""
    ia, ib, step, n = _setup(origin, vs, a, b)
    total = n[0] + n[1] + n[2]
    cur = ia.copy()
    if states[cur[0], cur[1], cur[2]] == OCCUPIED:
        return 0, 1
    m = np.zeros(3, np.int64)
    for s in range(total):
        k, t = _next_forward(origin, vs, a, b, ia, step, n, m)
        m[k] += 1
        cur[k] += step[k]
        if states[cur[0], cur[1], cur[2]] == OCCUPIED:
            return s + 1, s + 2
    return -1, total + 1


@njit(cache=True, nogil=True)
def unidirectional_blocked(origin, vs, states, a, b):
    """Occlusion verdict by a single forward walk: True if an Occupied voxel
    lies strictly between the endpoint voxels. Returns (blocked, visits)."""
    ia, ib, step, n = _setup(origin, vs, a, b)
    total = n[0] + n[1] + n[2]
    cur = ia.copy()
    m = np.zeros(3, np.int64)
    visits = 1
    for s in range(total - 1):
        k, t = _next_forward(origin, vs, a, b, ia, step, n, m)
        m[k] += 1
        cur[k] += step[k]
        visits += 1
        if states[cur[0], cur[1], cur[2]] == OCCUPIED:
            return True, visits
    if total > 0:
        visits += 1
    return False, visits


@njit(cache=True, nogil=True)
def birc_blocked(origin, vs, states, a, b):
    """Bidirectional occlusion test. Both frontiers advance alternately and
    stop when they meet or one of them reads an Occupied voxel."""
    ia, ib, step, n = _setup(origin, vs, a, b)
    total = n[0] + n[1] + n[2]
    if total == 0:
        return False, 1
    fwd = ia.copy()
    bwd = ib.copy()
    m = np.zeros(3, np.int64)
    r = n - 1
    fi = 0
    bi = total
    visits = 2
    while fi + 1 < bi:
        k, t = _next_forward(origin, vs, a, b, ia, step, n, m)
        m[k] += 1
        fwd[k] += step[k]
        fi += 1
        if fi < bi:
            visits += 1
            if states[fwd[0], fwd[1], fwd[2]] == OCCUPIED:
                return True, visits
        if fi + 1 < bi:
            k, t = _next_backward(origin, vs, a, b, ia, step, r)
            r[k] -= 1
            bwd[k] -= step[k]
            bi -= 1
            visits += 1
            if states[bwd[0], bwd[1], bwd[2]] == OCCUPIED:
                return True, visits
    return False, visits


@njit(cache=True, nogil=True)
def segment_clear(origin, vs, blocked, a, b):
    """True when no voxel pierced by a->b (endpoints included) is blocked."""
    ia, ib, step, n = _setup(origin, vs, a, b)
    total = n[0] + n[1] + n[2]
    cur = ia.copy()
    if blocked[cur[0], cur[1], cur[2]]:
        return False
    m = np.zeros(3, np.int64)
    for s in range(total):
        k, t = _next_forward(origin, vs, a, b, ia, step, n, m)
        m[k] += 1
        cur[k] += step[k]
        if blocked[cur[0], cur[1], cur[2]]:
            return False
    return True


@njit(cache=True, nogil=True)
def astar(blocked, dims, start, goal, vs):
    """26-connected A* over flat voxel indices; returns the voxel chain
    (empty if unreachable)."""
    nx, ny, nz = dims[0], dims[1], dims[2]
    ntot = nx * ny * nz
    flat = blocked.ravel()
    g = np.full(ntot, np.inf)
    parent = np.full(ntot, -1, np.int64)
    closed = np.zeros(ntot, np.bool_)
    s = (start[0] * ny + start[1]) * nz + start[2]
    e = (goal[0] * ny + goal[1]) * nz + goal[2]
    g[s] = 0.0
    gx, gy, gz = goal[0], goal[1], goal[2]
    h0 = vs * math.sqrt((start[0] - gx) ** 2 + (start[1] - gy) ** 2 + (start[2] - gz) ** 2)
    heap = [(h0, np.int64(0), s)]
    counter = 1
    found = False
    while len(heap) > 0:
        f, c, u = heapq.heappop(heap)
        if closed[u]:
            continue
        if u == e:
            found = True
            break
        closed[u] = True
        ux = u // (ny * nz)
        uy = (u // nz) % ny
        uz = u % nz
        for dx in range(-1, 2):
            x = ux + dx
            if x < 0 or x >= nx:
                continue
            for dy in range(-1, 2):
                y = uy + dy
                if y < 0 or y >= ny:
                    continue
                for dz in range(-1, 2):
                    if dx == 0 and dy == 0 and dz == 0:
                        continue
                    z = uz + dz
                    if z < 0 or z >= nz:
                        continue
                    v = (x * ny + y) * nz + z
                    if flat[v] or closed[v]:
                        continue
                    ng = g[u] + vs * math.sqrt(dx * dx + dy * dy + dz * dz)
                    if ng < g[v]:
                        g[v] = ng
                        parent[v] = u
                        h = vs * math.sqrt((x - gx) ** 2 + (y - gy) ** 2 + (z - gz) ** 2)
                        heapq.heappush(heap, (ng + h, np.int64(counter), v))
                        counter += 1
    if not found:
        return np.empty((0, 3), np.int64)
    chain = []
    u = e
    while u != -1:
        chain.append(u)
        u = parent[u]
    out = np.empty((len(chain), 3), np.int64)
    for i in range(len(chain)):
        u = chain[len(chain) - 1 - i]
        out[i, 0] = u // (ny * nz)
        out[i, 1] = (u // nz) % ny
        out[i, 2] = u % nz
    return out


@njit(cache=True, nogil=True)
def shortcut(origin, vs, blocked, pts):
    """Greedy line-of-sight shortcutting: from each anchor jump to the
    furthest later waypoint still visible."""
    n = pts.shape[0]
    keep = [0]
    i = 0
    while i < n - 1:
        j = n - 1
        while j > i + 1:
            if segment_clear(origin, vs, blocked, pts[i], pts[j]):
                break
            j -= 1
        keep.append(j)
        i = j
    out = np.empty((len(keep), 3))
    for q in range(len(keep)):
        out[q] = pts[keep[q]]
    return out


@njit(cache=True, nogil=True)
def view_axes(pitch, yaw):
    fwd = np.array([math.cos(pitch) * math.cos(yaw), math.cos(pitch) * math.sin(yaw), math.sin(pitch)])
    right = np.array([math.sin(yaw), -math.cos(yaw), 0.0])
    up = np.array([
        fwd[1] * right[2] - fwd[2] * right[1],
        fwd[2] * right[0] - fwd[0] * right[2],
        fwd[0] * right[1] - fwd[1] * right[0],
    ])
    return fwd, right, up


@njit(cache=True, nogil=True)
def coverage_one(origin, vs, states, occ_idx, occ_centers, p, pitch, yaw, dv, half_h, half_w):
    """Indices (into occ_idx) of Occupied voxels in range, inside the
    rectangular frustum and visible from p."""
    fwd, right, up = view_axes(pitch, yaw)
    out = []
    dv2 = dv * dv
    for i in range(occ_centers.shape[0]):
        dx = occ_centers[i, 0] - p[0]
        dy = occ_centers[i, 1] - p[1]
        dz = occ_centers[i, 2] - p[2]
        d2 = dx * dx + dy * dy + dz * dz
        if d2 > dv2:
            continue
        zf = dx * fwd[0] + dy * fwd[1] + dz * fwd[2]
        if zf <= 0.0:
            continue
        xr = dx * right[0] + dy * right[1] + dz * right[2]
        yu = dx * up[0] + dy * up[1] + dz * up[2]
        if abs(math.atan2(xr, zf)) > half_w or abs(math.atan2(yu, zf)) > half_h:
            continue
        blocked, _ = birc_blocked(origin, vs, states, p, occ_centers[i])
        if not blocked:
            out.append(i)
    res = np.empty(len(out), np.int64)
    for q in range(len(out)):
        res[q] = out[q]
    return res


@njit(cache=True, nogil=True)
def position_valid(origin, vs, dims, states, blocked, p):
    for k in range(3):
        c = (p[k] - origin[k]) / vs
        if not (c >= 0.0 and c < dims[k]):
            return False
    i = voxel_of(origin, vs, p)
    if states[i[0], i[1], i[2]] != FREE:
        return False
    return not blocked[i[0], i[1], i[2]]


@njit(cache=True, nogil=True)
def coverable_witness(origin, vs, dims, states, blocked, occ_centers, dirs, dist, pitch_lo, pitch_hi):
    """For each Occupied voxel, the first candidate direction from which a
    valid viewpoint at the given distance sees it, or -1."""
    out = np.full(occ_centers.shape[0], -1, np.int64)
    for i in range(occ_centers.shape[0]):
        c = occ_centers[i]
        for j in range(dirs.shape[0]):
            d = dirs[j]
            # viewer looks along -d; its pitch is asin(-d_z)
            pitch = math.asin(max(-1.0, min(1.0, -d[2])))
            if pitch < pitch_lo - 1e-12 or pitch > pitch_hi + 1e-12:
                continue
            p = c + dist * d
            if not position_valid(origin, vs, dims, states, blocked, p):
                continue
            blk, _ = birc_blocked(origin, vs, states, p, c)
            if not blk:
                out[i] = j
                break
    return out


@njit(cache=True, nogil=True)
def label_rays(origin, vs, states, starts, ends):
    """Mark Free voxels before the first Occupied one as Internal (in place).
    Returns the entry parameter of the first Occupied voxel per ray, or -1."""
    n = starts.shape[0]
    t_hit = np.full(n, -1.0)
    for r in range(n):
        vox, tin = traverse(origin, vs, starts[r], ends[r])
        for k in range(vox.shape[0]):
            i, j, l = vox[k, 0], vox[k, 1], vox[k, 2]
            st = states[i, j, l]
            if st == OCCUPIED:
                t_hit[r] = tin[k]
                break
            if st == FREE:
                states[i, j, l] = INTERNAL
    return t_hit
