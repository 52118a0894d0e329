"""Point clouds, the voxel occupancy map, ray casting and grid path search."""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from . import _kernels as K


class PlanningError(RuntimeError):
    """Raised when a geometric query has no solution (unreachable goals etc.)."""


class VoxelState(enum.IntEnum):
    FREE = K.FREE
    OCCUPIED = K.OCCUPIED
    INTERNAL = K.INTERNAL


DEFAULT_MAX_VOXELS = 60_000_000


@dataclass(eq=False)
class PointCloud:
    points: np.ndarray
    normals: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(self.points)):
            raise ValueError("non-finite coordinates in point cloud")
        if self.normals is not None:
            self.normals = np.ascontiguousarray(self.normals, dtype=float).reshape(-1, 3)
            if self.normals.shape != self.points.shape:
                raise ValueError("normals must match points in length")
            norms = np.linalg.norm(self.normals, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-6):
                raise ValueError("normals must be unit length")

    def __len__(self):
        return len(self.points)

    @cached_property
    def tree(self) -> cKDTree:
        if len(self.points) == 0:
            raise ValueError("empty input")
        return cKDTree(self.points)


def knn_query(cloud: PointCloud, query, k: int) -> np.ndarray:
    """Exact k nearest neighbours; equal distances resolve to the lower index."""
    if k < 1:
        raise ValueError("k must be >= 1")
    q = np.asarray(query, dtype=float)
    k = min(k, len(cloud))
    d, _ = cloud.tree.query(q, k=k)
    radius = float(np.atleast_1d(d)[-1])
    # gather every point at the k-th distance so ties are resolved by index
    cand = np.asarray(cloud.tree.query_ball_point(q, radius * (1 + 1e-12) + 1e-300), dtype=np.int64)
    dist = np.linalg.norm(cloud.points[cand] - q, axis=1)
    order = np.lexsort((cand, dist))
    return cand[order[:k]]


def radius_query(cloud: PointCloud, query, r: float) -> np.ndarray:
    if r <= 0:
        raise ValueError("radius must be positive")
    q = np.asarray(query, dtype=float)
    cand = np.asarray(cloud.tree.query_ball_point(q, r), dtype=np.int64)
    if cand.size == 0:
        return cand
    dist = np.linalg.norm(cloud.points[cand] - q, axis=1)
    return cand[np.lexsort((cand, dist))]


@dataclass(eq=False)
class OccupancyGrid:
    origin: np.ndarray
    voxel_size: float
    dims: tuple
    states: np.ndarray
    _blocked_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float)
        self.voxel_size = float(self.voxel_size)
        self.dims = tuple(int(d) for d in self.dims)
        if self.states.shape != self.dims:
            raise ValueError("states shape must equal dims")

    @property
    def upper(self) -> np.ndarray:
        return self.origin + np.asarray(self.dims) * self.voxel_size

    def contains(self, p) -> bool:
        c = (np.asarray(p, dtype=float) - self.origin) / self.voxel_size
        return bool(np.all(c >= 0) and np.all(c < np.asarray(self.dims)))

    def index_of(self, p) -> tuple:
        if not self.contains(p):
            raise ValueError("out of bounds")
        return tuple(int(i) for i in np.floor((np.asarray(p, dtype=float) - self.origin) / self.voxel_size))

    def indices_of(self, pts) -> np.ndarray:
        idx = np.floor((np.asarray(pts, dtype=float) - self.origin) / self.voxel_size).astype(np.int64)
        if np.any(idx < 0) or np.any(idx >= np.asarray(self.dims)):
            raise ValueError("out of bounds")
        return idx

    def center_of(self, idx) -> np.ndarray:
        return self.origin + (np.asarray(idx, dtype=float) + 0.5) * self.voxel_size

    def state(self, idx) -> VoxelState:
        return VoxelState(int(self.states[tuple(idx)]))

    @property
    def occupied_indices(self) -> np.ndarray:
        return np.argwhere(self.states == K.OCCUPIED)

    def with_states(self, states) -> "OccupancyGrid":
        return OccupancyGrid(self.origin.copy(), self.voxel_size, self.dims, states)

    def blocked_mask(self, clearance: float) -> np.ndarray:
        """Voxels a vehicle centre may not enter: Occupied, Internal, or with
        centre within `clearance` of an Occupied voxel centre."""
        key = round(float(clearance), 12)
        if key not in self._blocked_cache:
            occ = self.states == K.OCCUPIED
            if occ.any():
                dist = ndimage.distance_transform_edt(~occ) * self.voxel_size
                mask = dist <= clearance + 1e-9
            else:
                mask = np.zeros(self.dims, bool)
            mask |= self.states == K.INTERNAL
            mask.setflags(write=False)
            self._blocked_cache[key] = mask
        return self._blocked_cache[key]

    def save(self, path) -> None:
        header = struct.pack("<3dd3i", *self.origin, self.voxel_size, *self.dims)
        Path(path).write_bytes(header + self.states.astype(np.uint8).tobytes(order="C"))

    @classmethod
    def load(cls, path) -> "OccupancyGrid":
        raw = Path(path).read_bytes()
        hsize = struct.calcsize("<3dd3i")
        vals = struct.unpack("<3dd3i", raw[:hsize])
        dims = tuple(vals[4:7])
        states = np.frombuffer(raw[hsize:], dtype=np.uint8).reshape(dims).copy()
        return cls(np.array(vals[:3]), vals[3], dims, states)


def build_grid(cloud: PointCloud, voxel_size: float, padding: int = 1,
               max_voxels: int = DEFAULT_MAX_VOXELS) -> OccupancyGrid:
    if len(cloud) == 0:
        raise ValueError("empty input")
    if voxel_size <= 0:
        raise ValueError("voxel_size must be positive")
    if padding < 1:
        raise ValueError("padding must be >= 1")
    cells = np.floor(cloud.points / voxel_size).astype(np.int64)
    lo = cells.min(axis=0) - padding
    hi = cells.max(axis=0) + padding
    dims = tuple(int(d) for d in hi - lo + 1)
    if int(np.prod(dims, dtype=np.int64)) > max_voxels:
        raise ValueError("grid too large")
    states = np.zeros(dims, dtype=np.uint8)
    rel = cells - lo
    states[rel[:, 0], rel[:, 1], rel[:, 2]] = K.OCCUPIED
    return OccupancyGrid(lo * voxel_size, voxel_size, dims, states)


def _check_endpoints(grid, a, b):
    if not (grid.contains(a) and grid.contains(b)):
        raise ValueError("out of bounds")


@dataclass
class RaycastResult:
    hit: tuple | None
    traversed: np.ndarray
    visits: int


def raycast(grid: OccupancyGrid, start, end) -> RaycastResult:
    """Walk start->end; report the first Occupied voxel and every voxel pierced."""
    a = np.asarray(start, dtype=float)
    b = np.asarray(end, dtype=float)
    _check_endpoints(grid, a, b)
    vox, _ = K.traverse(grid.origin, grid.voxel_size, a, b)
    first, visits = K.raycast_first(grid.origin, grid.voxel_size, grid.states, a, b)
    hit = tuple(int(v) for v in vox[first]) if first >= 0 else None
    return RaycastResult(hit, vox, visits)


def occluded(grid: OccupancyGrid, start, end) -> tuple[bool, int]:
    """Unidirectional occlusion verdict (Occupied strictly between endpoint voxels)."""
    a = np.asarray(start, dtype=float)
    b = np.asarray(end, dtype=float)
    _check_endpoints(grid, a, b)
    return K.unidirectional_blocked(grid.origin, grid.voxel_size, grid.states, a, b)


def birc_visible(grid: OccupancyGrid, start, end, return_visits: bool = False):
    a = np.asarray(start, dtype=float)
    b = np.asarray(end, dtype=float)
    _check_endpoints(grid, a, b)
    blocked, visits = K.birc_blocked(grid.origin, grid.voxel_size, grid.states, a, b)
    if return_visits:
        return (not blocked), visits
    return not blocked


@dataclass
class SafePathResult:
    waypoints: np.ndarray
    length: float
    raw: np.ndarray | None = None

    @property
    def raw_length(self) -> float:
        pts = self.waypoints if self.raw is None else self.raw
        return polyline_length(pts)


def polyline_length(pts) -> float:
    pts = np.asarray(pts, dtype=float)
    if len(pts) < 2:
        return 0.0
    return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))


def astar_path(grid: OccupancyGrid, start, goal, clearance: float, shortcut: bool = True) -> SafePathResult:
    """Shortest 26-connected grid path avoiding the clearance-inflated obstacles."""
    a = np.asarray(start, dtype=float)
    b = np.asarray(goal, dtype=float)
    _check_endpoints(grid, a, b)
    blocked = grid.blocked_mask(clearance)
    ia = np.asarray(grid.index_of(a))
    ib = np.asarray(grid.index_of(b))
    if blocked[tuple(ia)] or blocked[tuple(ib)]:
        raise PlanningError("endpoint in collision")
    if np.array_equal(a, b):
        pts = a[None, :].copy()
        return SafePathResult(pts, 0.0, pts)
    chain = K.astar(blocked, np.asarray(grid.dims, np.int64), ia, ib, grid.voxel_size)
    if len(chain) == 0:
        raise PlanningError("unreachable")
    centers = grid.center_of(chain)
    raw = np.vstack([a, centers[1:-1], b]) if len(chain) >= 2 else np.vstack([a, b])
    if shortcut:
        pts = K.shortcut(grid.origin, grid.voxel_size, blocked, raw)
    else:
        pts = raw
    return SafePathResult(pts, polyline_length(pts), raw)
