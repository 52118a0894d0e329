"""Synthetic desk-scale scenes built from unions of capped tubes, a torus and a
wall with a doorway. Each scene comes with its analytic skeleton."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .geometry import PointCloud

SCENE_KINDS = ("cylinder", "pipe_network", "y_tube", "torus", "wall_gap", "tower")


@dataclass
class GroundTruth:
    kind: str
    segments: list                      # analytic skeleton as (p0, p1) pairs
    joints: int
    leaves: int
    cycles: int
    labels: np.ndarray | None           # per-point segment id, -1 where undefined
    inside: Callable[[np.ndarray], np.ndarray]
    normals: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def distance_to_skeleton(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.kind == "torus":
            R, c = self.extra["major"], self.extra["center"]
            q = pts - c
            rho = np.hypot(q[:, 0], q[:, 1])
            return np.hypot(rho - R, q[:, 2])
        return np.min([_seg_dist(pts, a, b) for a, b in self.segments], axis=0)


def _seg_dist(pts, a, b):
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    ab = b - a
    t = np.clip((pts - a) @ ab / (ab @ ab), 0.0, 1.0)
    return np.linalg.norm(pts - (a + t[:, None] * ab), axis=1)


def _frame(axis):
    axis = axis / np.linalg.norm(axis)
    ref = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(axis, ref)
    u /= np.linalg.norm(u)
    return axis, u, np.cross(axis, u)


def _tube_lateral(a, b, r, n, rng):
    axis, u, w = _frame(np.asarray(b, float) - np.asarray(a, float))
    length = np.linalg.norm(np.asarray(b, float) - np.asarray(a, float))
    th = rng.uniform(0, 2 * np.pi, n)
    t = rng.uniform(0, length, n)
    nrm = np.cos(th)[:, None] * u + np.sin(th)[:, None] * w
    return np.asarray(a, float) + t[:, None] * axis + r * nrm, nrm


def _disc(c, axis, r, n, rng):
    axis, u, w = _frame(np.asarray(axis, float))
    rad = r * np.sqrt(rng.uniform(0, 1, n))
    th = rng.uniform(0, 2 * np.pi, n)
    pts = np.asarray(c, float) + rad[:, None] * (np.cos(th)[:, None] * u + np.sin(th)[:, None] * w)
    return pts, np.repeat(axis[None, :], n, axis=0)


def _sphere(c, r, n, rng):
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return np.asarray(c, float) + r * v, v


def _tube_union(segments, radius, n, rng, caps, joints):
    """Surface of a union of tubes; caps at free ends, balls at joints."""
    radius = np.broadcast_to(np.asarray(radius, float), (len(segments),))
    parts = []
    for i, (a, b) in enumerate(segments):
        length = np.linalg.norm(np.subtract(b, a))
        parts.append(("lat", i, 2 * np.pi * radius[i] * length))
    for i, end, axis_sign in caps:
        parts.append(("cap", (i, end, axis_sign), np.pi * radius[i] ** 2))
    for c, r in joints:
        parts.append(("ball", (c, r), 4 * np.pi * r ** 2))
    area = np.array([p[2] for p in parts])
    # oversample then trim so the kept count is exactly n
    counts = np.ceil(area / area.sum() * n * 1.6).astype(int) + 8
    pts, nrms, labs = [], [], []
    for (kind, key, _), m in zip(parts, counts):
        if kind == "lat":
            a, b = segments[key]
            p, q = _tube_lateral(a, b, radius[key], m, rng)
            lab = np.full(m, key)
        elif kind == "cap":
            i, end, s = key
            a, b = np.asarray(segments[i][0], float), np.asarray(segments[i][1], float)
            c = b if end else a
            p, q = _disc(c, s * (b - a), radius[i], m, rng)
            lab = np.full(m, i)
        else:
            c, r = key
            p, q = _sphere(c, r, m, rng)
            lab = np.full(m, -1)
        pts.append(p)
        nrms.append(q)
        labs.append(lab)
    pts = np.vstack(pts)
    nrms = np.vstack(nrms)
    labs = np.concatenate(labs)
    # drop points buried inside another tube
    keep = np.ones(len(pts), bool)
    for i, (a, b) in enumerate(segments):
        d = _seg_dist(pts, a, b)
        keep &= ~((d < radius[i] - 1e-6) & (labs != i))
    pts, nrms, labs = pts[keep], nrms[keep], labs[keep]
    sel = np.sort(rng.choice(len(pts), size=min(n, len(pts)), replace=False))
    return pts[sel], nrms[sel], labs[sel]


def _inside_tubes(segments, radius):
    radius = np.broadcast_to(np.asarray(radius, float), (len(segments),))

    def inside(pts):
        pts = np.atleast_2d(pts)
        out = np.zeros(len(pts), bool)
        for (a, b), r in zip(segments, radius):
            out |= _seg_dist(pts, a, b) < r
        return out

    return inside


def _noisy(pts, sigma, rng):
    if sigma > 0:
        pts = pts + rng.normal(scale=sigma, size=pts.shape)
    return pts


def cylinder(radius=1.0, length=10.0, n=20000, sigma=0.0, seed=0):
    rng = np.random.default_rng(seed)
    a, b = np.zeros(3), np.array([0.0, 0.0, length])
    pts, nrm = _tube_lateral(a, b, radius, n, rng)
    gt = GroundTruth("cylinder", [(a, b)], joints=0, leaves=2, cycles=0,
                     labels=np.zeros(n, int), inside=_inside_tubes([(a, b)], radius), normals=nrm,
                     extra={"radius": radius, "length": length})
    return PointCloud(_noisy(pts, sigma, rng)), gt


def y_tube(radius=0.5, arm=4.0, n=20000, sigma=0.0, seed=0):
    rng = np.random.default_rng(seed)
    c = np.array([0.0, 0.0, arm])
    dirs = [np.array([0.0, 0.0, -1.0]),
            np.array([np.sin(np.pi / 3), 0.0, np.cos(np.pi / 3)]),
            np.array([-np.sin(np.pi / 3), 0.0, np.cos(np.pi / 3)])]
    segs = [(c, c + arm * d) for d in dirs]
    caps = [(i, True, 1.0) for i in range(3)]
    pts, nrm, lab = _tube_union(segs, radius, n, rng, caps, [(c, radius)])
    gt = GroundTruth("y_tube", segs, joints=1, leaves=3, cycles=0, labels=lab,
                     inside=_inside_tubes(segs, radius), normals=nrm, extra={"radius": radius})
    return PointCloud(_noisy(pts, sigma, rng)), gt


def tower(radius=0.8, height=12.0, bar=8.0, bar_radius=0.5, bar_height=9.0, n=20000, sigma=0.0, seed=0):
    rng = np.random.default_rng(seed)
    j = np.array([0.0, 0.0, bar_height])
    segs = [(j, np.array([0.0, 0.0, 0.0])), (j, np.array([0.0, 0.0, height])),
            (j, j + np.array([bar / 2, 0.0, 0.0])), (j, j - np.array([bar / 2, 0.0, 0.0]))]
    radii = [radius, radius, bar_radius, bar_radius]
    caps = [(i, True, 1.0) for i in range(4)]
    pts, nrm, lab = _tube_union(segs, radii, n, rng, caps, [(j, radius)])
    gt = GroundTruth("tower", segs, joints=1, leaves=4, cycles=0, labels=lab,
                     inside=_inside_tubes(segs, radii), normals=nrm, extra={"radius": radius})
    return PointCloud(_noisy(pts, sigma, rng)), gt


def pipe_network(radius=0.4, n=24000, sigma=0.0, seed=0):
    """A main run along x crossed by two lateral runs, plus a riser."""
    rng = np.random.default_rng(seed)
    h = 2.0
    nodes = {
        "w": (0.0, 0.0, h), "x1": (3.0, 0.0, h), "x2": (7.0, 0.0, h), "x3": (10.0, 0.0, h),
        "e": (13.0, 0.0, h), "s1": (3.0, -4.0, h), "n1": (3.0, 4.0, h), "s3": (10.0, -4.0, h),
        "n3": (10.0, 4.0, h), "up": (7.0, 0.0, h + 5.0),
    }
    pairs = [("x1", "w"), ("x1", "x2"), ("x2", "x3"), ("x3", "e"), ("x1", "s1"), ("x1", "n1"),
             ("x3", "s3"), ("x3", "n3"), ("x2", "up")]
    segs = [(np.array(nodes[a]), np.array(nodes[b])) for a, b in pairs]
    leaf_names = {"w", "e", "s1", "n1", "s3", "n3", "up"}
    caps = [(i, True, 1.0) for i, (a, b) in enumerate(pairs) if b in leaf_names]
    balls = [(np.array(nodes[k]), radius) for k in ("x1", "x2", "x3")]
    pts, nrm, lab = _tube_union(segs, radius, n, rng, caps, balls)
    gt = GroundTruth("pipe_network", segs, joints=3, leaves=7, cycles=0, labels=lab,
                     inside=_inside_tubes(segs, radius), normals=nrm, extra={"radius": radius})
    return PointCloud(_noisy(pts, sigma, rng)), gt


def l_bend(radius=0.5, arm=4.0, n=16000, sigma=0.0, seed=0):
    """Two straight tubes meeting at a right angle; a single bend, no joint."""
    rng = np.random.default_rng(seed)
    c = np.array([0.0, 0.0, arm])
    segs = [(c, np.zeros(3)), (c, c + np.array([arm, 0.0, 0.0]))]
    caps = [(0, True, 1.0), (1, True, 1.0)]
    pts, nrm, lab = _tube_union(segs, radius, n, rng, caps, [(c, radius)])
    gt = GroundTruth("l_bend", segs, joints=0, leaves=2, cycles=0, labels=lab,
                     inside=_inside_tubes(segs, radius), normals=nrm, extra={"radius": radius})
    return PointCloud(_noisy(pts, sigma, rng)), gt


def torus(major=3.0, minor=0.6, n=20000, sigma=0.0, seed=0):
    rng = np.random.default_rng(seed)
    # area-uniform sampling by rejection on the tube angle
    u = []
    while sum(len(x) for x in u) < n:
        cand = rng.uniform(0, 2 * np.pi, 2 * n)
        acc = rng.uniform(0, major + minor, 2 * n) < major + minor * np.cos(cand)
        u.append(cand[acc])
    th = np.concatenate(u)[:n]
    ph = rng.uniform(0, 2 * np.pi, n)
    center = np.array([0.0, 0.0, minor + 1.0])
    nrm = np.stack([np.cos(th) * np.cos(ph), np.cos(th) * np.sin(ph), np.sin(th)], axis=1)
    ring = np.stack([major * np.cos(ph), major * np.sin(ph), np.zeros(n)], axis=1)
    pts = center + ring + minor * nrm

    def inside(p):
        q = np.atleast_2d(p) - center
        return np.hypot(np.hypot(q[:, 0], q[:, 1]) - major, q[:, 2]) < minor

    gt = GroundTruth("torus", [], joints=0, leaves=0, cycles=1, labels=np.zeros(n, int), inside=inside,
                     normals=nrm, extra={"major": major, "minor": minor, "center": center})
    return PointCloud(_noisy(pts, sigma, rng)), gt


def wall_gap(width=10.0, height=6.0, gap=1.6, gap_height=3.0, n=12000, sigma=0.0, seed=0):
    """Thin wall in the plane x=0 with a doorway centred at y=0."""
    rng = np.random.default_rng(seed)
    pts = []
    while sum(len(p) for p in pts) < n:
        y = rng.uniform(-width / 2, width / 2, 2 * n)
        z = rng.uniform(0, height, 2 * n)
        keep = ~((np.abs(y) < gap / 2) & (z < gap_height))
        pts.append(np.stack([np.zeros(keep.sum()), y[keep], z[keep]], axis=1))
    pts = np.vstack(pts)[:n]
    nrm = np.repeat([[1.0, 0.0, 0.0]], n, axis=0)
    seg = (np.array([0.0, -width / 2, height / 2]), np.array([0.0, width / 2, height / 2]))
    gt = GroundTruth("wall_gap", [seg], joints=0, leaves=2, cycles=0, labels=np.zeros(n, int),
                     inside=lambda p: np.zeros(len(np.atleast_2d(p)), bool), normals=nrm,
                     extra={"gap": gap, "gap_height": gap_height})
    return PointCloud(_noisy(pts, sigma, rng)), gt


_BUILDERS = {
    "cylinder": cylinder,
    "pipe_network": pipe_network,
    "y_tube": y_tube,
    "torus": torus,
    "wall_gap": wall_gap,
    "tower": tower,
}


def synth_scene(kind: str, params: dict | None = None, seed: int = 0):
    if kind not in _BUILDERS:
        raise ValueError(f"unknown scene kind {kind!r}")
    return _BUILDERS[kind](**(params or {}), seed=seed)
