"""Corridor-constrained quintic trajectories for position and gimbal angles.

Each piece joins two consecutive waypoints of the coverage polyline. Junction
velocities come from a finite-difference rule, junction accelerations are
zero, and piece durations are stretched until every limit holds exactly
(extrema are found from polynomial roots, not by sampling).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .geometry import OccupancyGrid, PlanningError
from .planner import CoveragePath, DynamicLimits

POS, PITCH, YAW = slice(0, 3), 3, 4
DILATION = 1.1
MAX_ROUNDS = 100
JUNCTION_SPEED = 0.8


class CorridorError(PlanningError):
    pass


@dataclass
class Corridor:
    boxes: np.ndarray        # (B, 2, 3): min corner, max corner
    assignment: np.ndarray   # box index per piece
    knots: np.ndarray        # (M+1, 5): x, y, z, pitch, unwrapped yaw
    is_stop: np.ndarray      # knot is a viewpoint of the path

    @property
    def n_pieces(self) -> int:
        return len(self.knots) - 1


@dataclass
class Trajectory:
    durations: np.ndarray    # (M,)
    coeffs: np.ndarray       # (M, 5, 6) ascending powers per channel

    @property
    def total_time(self) -> float:
        return float(self.durations.sum())

    def _locate(self, t):
        edges = np.concatenate([[0.0], np.cumsum(self.durations)])
        t = np.clip(np.asarray(t, float), 0.0, edges[-1])
        k = np.clip(np.searchsorted(edges, t, side="right") - 1, 0, len(self.durations) - 1)
        return k, t - edges[k]

    def evaluate(self, t, order: int = 0) -> np.ndarray:
        """Channels (x, y, z, pitch, yaw) or their derivatives at times t."""
        k, tau = self._locate(np.atleast_1d(t))
        c = self.coeffs[k]
        for _ in range(order):
            c = _deriv(c)
        powers = tau[:, None] ** np.arange(c.shape[-1])
        return np.einsum("nck,nk->nc", c, powers)

    def to_json(self) -> str:
        return json.dumps({"pieces": [{"duration": float(T), "coefficients": c.tolist()}
                                      for T, c in zip(self.durations, self.coeffs)]}, indent=1)


# ------------------------------------------------------------------ knots

def path_knots(path: CoveragePath) -> tuple[np.ndarray, np.ndarray]:
    """Waypoint chain with gimbal angles; intermediate safe-path points take
    angles interpolated by arc length between the surrounding stops."""
    rows, stop = [], []
    vps = path.viewpoints
    yaw = vps[0].yaw
    rows.append([*vps[0].position, vps[0].pitch, yaw])
    stop.append(True)
    for a, b, seg in zip(vps[:-1], vps[1:], path.segments):
        dyaw = math.remainder(b.yaw - a.yaw, 2 * math.pi)
        w = seg.waypoints
        d = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(w, axis=0), axis=1))])
        total = d[-1]
        for k in range(1, len(w)):
            s = 1.0 if k == len(w) - 1 or total == 0 else d[k] / total
            rows.append([*w[k], a.pitch + s * (b.pitch - a.pitch), yaw + s * dyaw])
            stop.append(k == len(w) - 1)
        yaw += dyaw
        rows[-1][:3] = list(b.position)
    knots = np.array(rows, float).reshape(-1, 5)
    stop = np.array(stop, bool)
    # drop repeated knots that carry no motion at all
    keep = np.ones(len(knots), bool)
    for k in range(1, len(knots)):
        if np.allclose(knots[k], knots[k - 1], atol=1e-12, rtol=0):
            keep[k] = False
            stop[k - 1] |= stop[k]
    return knots[keep], stop[keep]


# ------------------------------------------------------------------ corridor

class _BoxChecker:
    """O(1) test whether an axis-aligned box holds any blocked voxel centre."""

    def __init__(self, grid: OccupancyGrid, clearance: float):
        self.grid = grid
        blocked = grid.blocked_mask(clearance).astype(np.int64)
        s = blocked.cumsum(0).cumsum(1).cumsum(2)
        self.sat = np.pad(s, ((1, 0), (1, 0), (1, 0)))
        self.lo = grid.origin
        self.hi = grid.upper

    def _range(self, lo, hi):
        g = self.grid
        # closed box: a centre on a face counts as inside
        a = np.ceil((lo - g.origin) / g.voxel_size - 0.5 - 1e-9).astype(int)
        b = np.floor((hi - g.origin) / g.voxel_size - 0.5 + 1e-9).astype(int)
        return np.maximum(a, 0), np.minimum(b, np.asarray(g.dims) - 1)

    def clear(self, lo, hi) -> bool:
        if np.any(lo < self.lo) or np.any(hi > self.hi):
            return False
        a, b = self._range(lo, hi)
        if np.any(b < a):
            return True
        S = self.sat
        x0, y0, z0 = a
        x1, y1, z1 = b + 1
        n = (S[x1, y1, z1] - S[x0, y1, z1] - S[x1, y0, z1] - S[x1, y1, z0]
             + S[x0, y0, z1] + S[x0, y1, z0] + S[x1, y0, z0] - S[x0, y0, z0])
        return n == 0


def build_corridors(path: CoveragePath, grid: OccupancyGrid, clearance: float,
                    face_cap: float = 2.0, min_piece: float = 1e-3) -> Corridor:
    knots, stop = path_knots(path)
    return corridors_for_knots(knots, stop, grid, clearance, face_cap, min_piece)


def corridors_for_knots(knots, stop, grid: OccupancyGrid, clearance: float,
                        face_cap: float = 2.0, min_piece: float = 1e-3) -> Corridor:
    chk = _BoxChecker(grid, clearance)
    knots = [np.asarray(k, float) for k in knots]
    stop = list(stop)
    for k in knots:
        if not chk.clear(k[:3], k[:3]):
            raise CorridorError("corridor failure: waypoint in collision")
    # split pieces whose own bounding box touches an obstacle
    i = 0
    while i < len(knots) - 1:
        a, b = knots[i][:3], knots[i + 1][:3]
        if chk.clear(np.minimum(a, b), np.maximum(a, b)):
            i += 1
            continue
        if np.linalg.norm(b - a) < min_piece:
            raise CorridorError("corridor failure")
        knots.insert(i + 1, (knots[i] + knots[i + 1]) / 2)
        stop.insert(i + 1, False)
    P = np.array(knots)
    boxes, assign = [], []
    i = 0
    step = grid.voxel_size / 2
    while i < len(P) - 1:
        j = i + 1
        lo, hi = np.minimum(P[i, :3], P[j, :3]), np.maximum(P[i, :3], P[j, :3])
        while j + 1 < len(P):
            nlo, nhi = np.minimum(lo, P[j + 1, :3]), np.maximum(hi, P[j + 1, :3])
            if not chk.clear(nlo, nhi):
                break
            lo, hi, j = nlo, nhi, j + 1
        lo, hi = _inflate(chk, lo.copy(), hi.copy(), step, face_cap)
        boxes.append(np.stack([lo, hi]))
        assign += [len(boxes) - 1] * (j - i)
        i = j
    if not boxes:
        # a single knot: a degenerate box at that point
        boxes.append(np.stack([P[0, :3], P[0, :3]]))
    return Corridor(np.array(boxes), np.array(assign, int), P, np.array(stop, bool))


def _inflate(chk, lo, hi, step, cap):
    grown = np.zeros(6)
    active = [True] * 6
    while any(active):
        for f in range(6):
            if not active[f]:
                continue
            ax, up = divmod(f, 2)
            nlo, nhi = lo.copy(), hi.copy()
            if up:
                nhi[ax] += step
            else:
                nlo[ax] -= step
            if grown[f] + step > cap + 1e-12 or not chk.clear(nlo, nhi):
                active[f] = False
                continue
            lo, hi = nlo, nhi
            grown[f] += step
    return lo, hi


# ------------------------------------------------------------------ fitting

def quintic(p0, v0, a0, p1, v1, a1, T) -> np.ndarray:
    """Ascending coefficients of the quintic matching both end states."""
    p0, v0, a0, p1, v1, a1 = (np.asarray(x, float) for x in (p0, v0, a0, p1, v1, a1))
    T2, T3, T4, T5 = T * T, T ** 3, T ** 4, T ** 5
    c3 = (20 * (p1 - p0) - (8 * v1 + 12 * v0) * T - (3 * a0 - a1) * T2) / (2 * T3)
    c4 = (30 * (p0 - p1) + (14 * v1 + 16 * v0) * T + (3 * a0 - 2 * a1) * T2) / (2 * T4)
    c5 = (12 * (p1 - p0) - 6 * (v1 + v0) * T - (a0 - a1) * T2) / (2 * T5)
    return np.stack([p0, v0, a0 / 2, c3, c4, c5], axis=-1)


def _deriv(c):
    return c[..., 1:] * np.arange(1, c.shape[-1])


def _poly_max_norm(c, T) -> float:
    """max over [0, T] of the Euclidean norm of a vector polynomial (rows = axes)."""
    c = np.atleast_2d(c)
    sq = np.zeros(2 * c.shape[1] - 1)
    for row in c:
        sq = sq + np.convolve(row, row)
    cand = [0.0, T]
    d = _deriv(sq)
    nz = np.flatnonzero(np.abs(d) > 1e-300)
    if nz.size:
        roots = np.roots(d[: nz[-1] + 1][::-1])
        cand += [r.real for r in roots if abs(r.imag) < 1e-9 and 0 < r.real < T]
    vals = np.polyval(sq[::-1], np.array(cand))
    return float(math.sqrt(max(0.0, vals.max())))


def _poly_range(c, T):
    """(min, max) of a scalar polynomial on [0, T]."""
    cand = [0.0, T]
    d = _deriv(c)
    nz = np.flatnonzero(np.abs(d) > 1e-300)
    if nz.size:
        roots = np.roots(d[: nz[-1] + 1][::-1])
        cand += [r.real for r in roots if abs(r.imag) < 1e-9 and 0 < r.real < T]
    vals = np.polyval(c[::-1], np.array(cand))
    return float(vals.min()), float(vals.max())


def _initial_durations(K, limits: DynamicLimits):
    d = np.linalg.norm(np.diff(K[:, :3], axis=0), axis=1)
    v, a = limits.v_max, limits.a_max
    # trapezoidal rest-to-rest timing
    t_pos = np.where(d * a <= v * v, 2 * np.sqrt(d / a), d / v + v / a)
    dang = np.abs(np.diff(K[:, 3:5], axis=0)).max(axis=1)
    t_ang = dang / limits.omega_max
    return np.maximum(np.maximum(t_pos, t_ang), 1e-3)


def _junction_rates(K, T, cap_pos, cap_ang, frozen):
    n = len(K)
    V = np.zeros((n, 5))
    for j in range(1, n - 1):
        if frozen[j]:
            continue
        v = (K[j + 1] - K[j - 1]) / (T[j - 1] + T[j])
        s = np.linalg.norm(v[:3])
        if s > cap_pos:
            v[:3] *= cap_pos / s
        v[3:] = np.clip(v[3:], -cap_ang, cap_ang)
        V[j] = v
    return V


def _fit(K, T, V):
    zero = np.zeros(5)
    return np.array([quintic(K[i], V[i], zero, K[i + 1], V[i + 1], zero, T[i]) for i in range(len(T))])


def generate_trajectory(corridor: Corridor, limits: DynamicLimits, max_rounds: int = MAX_ROUNDS,
                        hold_at_stops: bool = False) -> Trajectory:
    K = corridor.knots
    M = corridor.n_pieces
    if M == 0:
        return Trajectory(np.zeros(0), np.zeros((0, 5, 6)))
    T = _initial_durations(K, limits)
    frozen = np.zeros(M + 1, bool)
    frozen[0] = frozen[-1] = True
    if hold_at_stops:
        frozen |= corridor.is_stop
    tol = 1e-9
    for _ in range(max_rounds):
        V = _junction_rates(K, T, JUNCTION_SPEED * limits.v_max, JUNCTION_SPEED * limits.omega_max, frozen)
        C = _fit(K, T, V)
        slow = np.zeros(M, bool)
        refreeze = False
        held = frozen.copy()
        for i in range(M):
            c = C[i]
            dv = _deriv(c)
            da = _deriv(dv)
            dj = _deriv(da)
            if (_poly_max_norm(dv[POS], T[i]) > limits.v_max + tol
                    or _poly_max_norm(da[POS], T[i]) > limits.a_max + tol
                    or _poly_max_norm(dj[POS], T[i]) > limits.j_max + tol
                    or _poly_max_norm(dv[PITCH], T[i]) > limits.omega_max + tol
                    or _poly_max_norm(dv[YAW], T[i]) > limits.omega_max + tol):
                slow[i] = True
            box = corridor.boxes[corridor.assignment[i]]
            for ax in range(3):
                lo, hi = _poly_range(c[ax], T[i])
                if lo < box[0, ax] - tol or hi > box[1, ax] + tol:
                    if held[i] and held[i + 1]:
                        raise CorridorError("corridor failure")
                    frozen[i] = frozen[i + 1] = True
                    refreeze = True
                    break
        if not slow.any() and not refreeze:
            return Trajectory(T.copy(), C)
        T[slow] *= DILATION
    raise PlanningError("time allocation did not converge")


# ------------------------------------------------------------------ checking

@dataclass
class FeasibilityReport:
    max_v: float
    max_a: float
    max_j: float
    max_pitch_rate: float
    max_yaw_rate: float
    corridor_excess: float
    continuity: float
    waypoint_error: float
    passed: bool
    violations: list


def validate_trajectory(traj: Trajectory, corridor: Corridor, limits: DynamicLimits,
                        rate: float = 1000.0, tol: float = 1e-6) -> FeasibilityReport:
    """Dense-sampling check, independent of the generator's root finding."""
    mv = ma = mj = mp = my = exc = 0.0
    for i, (T, c) in enumerate(zip(traj.durations, traj.coeffs)):
        n = max(2, int(math.ceil(T * rate)) + 1)
        t = np.linspace(0.0, T, n)
        pw = t[:, None] ** np.arange(6)
        d1, d2, d3 = _deriv(c), _deriv(_deriv(c)), _deriv(_deriv(_deriv(c)))
        pos = pw @ c.T
        v = pw[:, :5] @ d1.T
        a = pw[:, :4] @ d2.T
        j = pw[:, :3] @ d3.T
        mv = max(mv, float(np.linalg.norm(v[:, POS], axis=1).max()))
        ma = max(ma, float(np.linalg.norm(a[:, POS], axis=1).max()))
        mj = max(mj, float(np.linalg.norm(j[:, POS], axis=1).max()))
        mp = max(mp, float(np.abs(v[:, PITCH]).max()))
        my = max(my, float(np.abs(v[:, YAW]).max()))
        box = corridor.boxes[corridor.assignment[i]]
        out = np.maximum(box[0] - pos[:, POS], pos[:, POS] - box[1]).max()
        exc = max(exc, float(out))
    cont = 0.0
    for i in range(len(traj.durations) - 1):
        c0, c1 = traj.coeffs[i], traj.coeffs[i + 1]
        T = traj.durations[i]
        for d in range(3):
            e = c0.copy()
            s = c1.copy()
            for _ in range(d):
                e, s = _deriv(e), _deriv(s)
            end = np.array([np.polyval(r[::-1], T) for r in e])
            cont = max(cont, float(np.abs(end - s[:, 0]).max()))
    werr = 0.0
    edges = np.concatenate([[0.0], np.cumsum(traj.durations)])
    if len(traj.durations):
        at = traj.evaluate(edges)
        werr = float(np.abs(at[:, :3] - corridor.knots[:, :3]).max())
    bad = []
    if mv > limits.v_max + tol:
        bad.append("velocity")
    if ma > limits.a_max + tol:
        bad.append("acceleration")
    if mj > limits.j_max + tol:
        bad.append("jerk")
    if mp > limits.omega_max + tol or my > limits.omega_max + tol:
        bad.append("gimbal rate")
    if exc > tol:
        bad.append("corridor")
    if cont > tol:
        bad.append("continuity")
    if werr > tol:
        bad.append("waypoint")
    return FeasibilityReport(mv, ma, mj, mp, my, exc, cont, werr, not bad, bad)


def write_samples_csv(traj: Trajectory, path, rate: float = 10.0) -> None:
    total = traj.total_time
    t = np.append(np.arange(0.0, total, 1.0 / rate), total)
    p = traj.evaluate(t)
    v = traj.evaluate(t, 1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "y", "z", "pitch", "yaw", "vx", "vy", "vz"])
        for k in range(len(t)):
            yaw = math.remainder(p[k, 4], 2 * math.pi)
            w.writerow([f"{t[k]:.6f}", *(f"{x:.9g}" for x in p[k, :4]), f"{yaw:.9g}",
                        *(f"{x:.9g}" for x in v[k, :3])])
