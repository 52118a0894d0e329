import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import crossing_scene, empty_grid
from skelcover.geometry import PlanningError, VoxelState
from skelcover.planner import (DynamicLimits, TravelCost, ang, assemble, build_path, global_sequence,
                               junction_points, local_cost_matrix, path_length_check, plan_global,
                               plan_hierarchical, plan_local_paths, refine_path, select_boundaries,
                               start_viewpoint, write_path_csv)
from skelcover.viewpoints import Viewpoint

LIMITS = DynamicLimits()


def vp(p, uid, pitch=0.0, yaw=0.0, sub=0):
    return Viewpoint(np.asarray(p, float), pitch, yaw, sub, uid=uid)


@pytest.fixture(scope="module")
def open_space():
    return empty_grid((40, 40, 14), 0.3, (-6, -6, -1))


def coster_for(grid, clearance=0.3):
    return TravelCost(grid, LIMITS, clearance)


def _open_cost(C, first, last=None):
    """Enumeration oracle over paths from ``first`` (and to ``last`` if given)."""
    n = len(C)
    mid = [k for k in range(n) if k not in (first, last)]
    best = math.inf
    for p in itertools.permutations(mid):
        seq = [first, *p] + ([last] if last is not None else [])
        best = min(best, sum(C[a][b] for a, b in zip(seq[:-1], seq[1:])))
    return best


# ------------------------------------------------------------ metric

def test_limits_validation():
    with pytest.raises(ValueError):
        DynamicLimits(v_max=0.0)


def test_ang_wraps():
    assert ang(0.1, 2 * math.pi - 0.1) == pytest.approx(0.2)
    assert ang(-3.0, 3.0) == pytest.approx(2 * math.pi - 6.0)
    assert ang(1.0, 1.0) == 0.0


def test_cost_examples(open_space):
    c = coster_for(open_space)
    a, b = vp([0, 0, 2], 0), vp([0, 0, 2], 1, yaw=math.pi / 2)
    assert c.cost(a, b) == pytest.approx(math.pi / 2)
    a, b = vp([-2, 0, 2], 2), vp([2, 0, 2], 3)
    assert c.cost(a, b) == pytest.approx(2.0)


def test_cost_is_symmetric_and_memoised(open_space):
    c = coster_for(open_space)
    a, b = vp([-3, -2, 1], 0, 0.2, 1.0), vp([3, 2, 3], 1, -0.4, -2.0)
    assert c.cost(a, b) == c.cost(b, a)
    assert c.searches == 1
    assert np.allclose(c.path(b, a).waypoints, c.path(a, b).waypoints[::-1])


def test_unreachable_pair_raises():
    grid = empty_grid((20, 20, 20), 0.3, (0, 0, 0))
    grid.states[10, :, :] = VoxelState.OCCUPIED
    c = coster_for(grid, 0.0)
    with pytest.raises(PlanningError, match="unreachable viewpoint"):
        c.cost(vp([1, 3, 3], 0), vp([5, 3, 3], 1))


# ------------------------------------------------------------ global level

def test_global_sequence_examples():
    assert global_sequence([[5, 5, 5]], [0, 0, 0]) == [0]
    assert global_sequence([[20, 0, 0], [10, 0, 0]], [0, 0, 0]) == [1, 0]


@pytest.mark.parametrize("seed", range(5))
def test_global_sequence_near_optimal(seed):
    r = np.random.default_rng(seed)
    cents = r.uniform(-10, 10, (6, 3))
    pose = np.zeros(3)
    pts = np.vstack([pose, cents])
    C = np.linalg.norm(pts[:, None] - pts[None], axis=2)
    seq = global_sequence(cents, pose, seed=seed)
    got = sum(C[a][b] for a, b in zip([0] + [k + 1 for k in seq[:-1]], [k + 1 for k in seq]))
    assert sorted(seq) == list(range(6))
    assert got <= 1.05 * _open_cost(C, 0) + 1e-9


def test_select_boundaries_example():
    anchors = [[0, 0, 0], [10, 0, 0], [20, 0, 0]]
    g1 = [vp([2, 0, 0], 0), vp([9, 0, 0], 1)]
    g2 = [vp([19, 0, 0], 2), vp([22, 0, 0], 3)]
    (s1, e1), (s2, e2) = select_boundaries(anchors, [g1, g2])
    assert (s1, e1) == (0, 1) and e2 is None and s2 == 0


def test_select_boundaries_single_and_collision():
    anchors = [[0, 0, 0], [10, 0, 0], [20, 0, 0], [30, 0, 0]]
    lone = [vp([10, 0, 0], 0)]
    # the best start is also the best end: the end falls back to the runner-up
    clash = [vp([20, 0, 0], 1), vp([5, 0, 0], 2), vp([35, 0, 0], 3)]
    last = [vp([30, 0, 0], 4)]
    b = select_boundaries(anchors, [lone, clash, last])
    assert b[0] == (0, 0)
    assert b[1][0] == 0 and b[1][1] == 2
    assert b[2] == (0, None)


# ------------------------------------------------------------ local level

def _group(r, n, uid0=0, spread=4.0):
    return [vp(r.uniform(-spread, spread, 3) * [1, 1, 0.3] + [0, 0, 2], uid0 + k,
               r.uniform(-0.5, 0.5), r.uniform(-math.pi, math.pi)) for k in range(n)]


def test_local_matrix_structure(open_space, rng):
    vps = _group(rng, 5)
    c = coster_for(open_space)
    M = local_cost_matrix(vps, c).costs
    assert np.all(np.diag(M) == 0) and np.all(M[:, 0] == 0)
    assert np.all(np.isinf(M[4, 1:4]))
    assert M[1, 2] == pytest.approx(c.cost(vps[1], vps[2]))
    L = local_cost_matrix(vps, c, last=True).costs
    assert np.all(np.isfinite(L)) and L[4, 1] == pytest.approx(c.cost(vps[4], vps[1]))
    with pytest.raises(ValueError):
        local_cost_matrix(vps[:1], c)


def test_two_viewpoints_forced(open_space):
    g = [vp([0, 0, 2], 0), vp([3, 0, 2], 1)]
    (o,) = plan_local_paths([g], [(1, 0)], coster_for(open_space))
    assert [v.uid for v in o] == [1, 0]


def test_line_is_swept_monotonically(open_space):
    xs = [-4, 3, -1, 2, 0, 4, -3, 1]
    g = [vp([x, 0, 2], k) for k, x in enumerate(xs)]
    (o,) = plan_local_paths([g], [(0, 5)], coster_for(open_space))
    got = [v.position[0] for v in o]
    assert got == sorted(got)


def test_local_paths_near_optimal_and_worker_independent(open_space):
    r = np.random.default_rng(7)
    groups, bounds, uid = [], [], 0
    for n in (3, 6, 8, 9):
        groups.append(_group(r, n, uid))
        uid += n
        bounds.append((0, n - 1))
    bounds[-1] = (0, None)
    c = coster_for(open_space)
    seq = plan_local_paths(groups, bounds, c, seed=3, workers=1)
    par = plan_local_paths(groups, bounds, coster_for(open_space), seed=3, workers=4)
    assert [[v.uid for v in o] for o in seq] == [[v.uid for v in o] for o in par]
    for g, (s, e), o in zip(groups, bounds, seq):
        C = [[c.cost(a, b) for b in g] for a in g]
        idx = {v.uid: k for k, v in enumerate(g)}
        got = sum(C[idx[a.uid]][idx[b.uid]] for a, b in zip(o[:-1], o[1:]))
        assert o[0] is g[s] and (e is None or o[-1] is g[e])
        assert sorted(v.uid for v in o) == sorted(v.uid for v in g)
        assert got <= 1.05 * _open_cost(C, s, e) + 1e-9


def test_assemble_two_groups(open_space):
    c = coster_for(open_space)
    pose = start_viewpoint([-5, -5, 2])
    parts = [[vp([-2, 0, 2], 0), vp([-1, 0, 2], 1)], [vp([1, 0, 2], 2), vp([2, 0, 2], 3)]]
    p = assemble(pose, parts, c)
    assert p.uids == [-1, 0, 1, 2, 3]
    assert len(p.segments) == 4
    assert np.allclose(p.segments[2].waypoints[[0, -1]], [[-1, 0, 2], [1, 0, 2]])
    assert p.total_length == pytest.approx(path_length_check(p), abs=1e-6)


# ------------------------------------------------------------ refinement

@pytest.fixture(scope="module")
def crossing():
    return crossing_scene()


def test_crossing_is_shortened(crossing):
    grid, per = crossing
    res = plan_hierarchical(per, start_viewpoint([-8, -8, 2]), coster_for(grid), [[0, 0, 2.2]], 3.0, K=2000)
    assert res.path.total_cost < res.unrefined.total_cost
    assert res.refine.accepted >= 1
    assert sorted(res.path.uids) == sorted(res.unrefined.uids)
    assert res.path.uids[0] == -1 and res.path.uids[-1] == res.unrefined.uids[-1]


def test_refine_noops(crossing):
    grid, per = crossing
    c = coster_for(grid)
    pose = start_viewpoint([-8, -8, 2])
    base = plan_hierarchical(per, pose, c, [[0, 0, 2.2]], 3.0, refine=False).path
    same, _ = refine_path(base, [[0, 0, 2.2]], 3.0, 0, 0, c)
    assert same.uids == base.uids
    same, _ = refine_path(base, np.empty((0, 3)), 3.0, 1000, 0, c)
    assert same.uids == base.uids


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_refine_is_monotone(seed):
    grid = empty_grid((24, 24, 10), 0.5, (-6, -6, -1))
    r = np.random.default_rng(seed)
    vps = [start_viewpoint([-5, -5, 1])] + _group(r, 12, spread=5.0)
    c = coster_for(grid, 0.0)
    path = build_path(vps, c)
    out, stats = refine_path(path, [[0, 0, 2]], 4.0, 300, seed, c)
    assert out.total_cost <= path.total_cost
    assert sorted(out.uids) == sorted(path.uids)
    assert out.uids[0] == path.uids[0] and out.uids[-1] == path.uids[-1]


def test_junction_points():
    from skelcover.decomposition import Branch
    bs = [Branch(0, [(0, 1), (1, 2)], None), Branch(1, [(2, 3)], None), Branch(2, [(2, 4)], None)]
    V = np.arange(15, dtype=float).reshape(5, 3)
    assert np.array_equal(junction_points(bs, V), V[[2]])


# ------------------------------------------------------------ orchestration

def test_hierarchical_visits_everything_once(open_space, rng):
    per = {0: _group(rng, 6, 0), 1: _group(rng, 5, 6), 2: [vp([4, 4, 2], 11)]}
    res = plan_hierarchical(per, start_viewpoint([-5, -5, 2]), coster_for(open_space), [[0, 0, 2]], 5.0, K=500)
    assert sorted(res.path.uids) == [-1] + list(range(12))
    assert sorted(res.sequence) == [0, 1, 2]
    for seg in res.path.segments:
        assert not any(open_space.blocked_mask(0.3)[open_space.index_of(p)] for p in seg.waypoints)
    assert set(res.timings) == {"global", "local", "assemble", "refine"}


def test_hierarchical_rejects_empty(open_space):
    with pytest.raises(ValueError):
        plan_hierarchical({}, start_viewpoint([0, 0, 2]), coster_for(open_space), [], 1.0)
    with pytest.raises(ValueError):
        plan_hierarchical({0: []}, start_viewpoint([0, 0, 2]), coster_for(open_space), [], 1.0)


def test_global_ablation_covers_everything(open_space, rng):
    vps = _group(rng, 10)
    res = plan_global(vps, start_viewpoint([-5, -5, 2]), coster_for(open_space))
    assert sorted(res.path.uids) == [-1] + list(range(10))


def test_path_csv(tmp_path, open_space):
    p = build_path([start_viewpoint([0, 0, 2]), vp([1, 0, 2], 0, 0.5, 0.25, 3)], coster_for(open_space))
    write_path_csv(p, tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "index,x,y,z,pitch,yaw,subspace"
    assert lines[2] == "1,1,0,2,0.5,0.25,3"
