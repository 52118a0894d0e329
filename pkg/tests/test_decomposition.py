import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import scene
from skelcover.decomposition import (allocate_space, decompose_branches, discretize_branch, find_joints,
                                     labels_of, undirected_angle, write_branch_table, write_labels)
from skelcover.geometry import PointCloud
from skelcover.skeleton import SkeletonGraph

DELTA = np.radians(45)


def graph(verts, edges):
    return SkeletonGraph(np.asarray(verts, float), np.asarray(edges, int).reshape(-1, 2))


def path_graph(n=6):
    return graph([[i, 0, 0] for i in range(n)], [(i, i + 1) for i in range(n - 1)])


def y_graph(arm=4):
    verts, edges = [[0, 0, 0]], []
    for d in ([0, 0, -1], [np.sin(np.pi / 3), 0, 0.5], [-np.sin(np.pi / 3), 0, 0.5]):
        prev = 0
        for k in range(1, arm + 1):
            verts.append(list(np.multiply(d, k)))
            edges.append((prev, len(verts) - 1))
            prev = len(verts) - 1
    return graph(verts, edges)


def _check_partition(g, branches, delta):
    seen = [tuple(sorted(e)) for b in branches for e in b.edges]
    assert sorted(seen) == sorted(tuple(sorted(e)) for e in g.edges.tolist())
    V = g.vertices
    for b in branches:
        for (u, v), (u2, _) in zip(b.edges, b.edges[1:]):
            assert v == u2
        for u, v in b.edges:
            assert undirected_angle(V[v] - V[u], b.reference) < delta


def test_find_joints():
    assert find_joints(path_graph()) == []
    assert find_joints(y_graph()) == [0]
    # X with a pendant hanging off one arm
    x = graph([[0, 0, 0], [1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [1, 1, 0]],
              [(0, 1), (0, 2), (0, 3), (0, 4), (1, 5)])
    assert find_joints(x) == [0]


def test_straight_path_is_one_branch():
    b = decompose_branches(path_graph(6), DELTA)
    assert len(b) == 1 and len(b[0].edges) == 5


def test_l_bend_splits_once():
    g = graph([[0, 0, 0], [1, 0, 0], [2, 0, 0], [2, 1, 0], [2, 2, 0]], [(0, 1), (1, 2), (2, 3), (3, 4)])
    b = decompose_branches(g, DELTA)
    assert len(b) == 2
    assert [len(x.edges) for x in b] == [2, 2]


def test_y_graph_three_branches_from_joint():
    g = y_graph()
    b = decompose_branches(g, DELTA)
    assert len(b) == 3
    assert all(x.edges[0][0] == 0 for x in b)
    _check_partition(g, b, DELTA)


def test_cycle_without_joints():
    th = np.linspace(0, 2 * np.pi, 12, endpoint=False)
    g = graph(np.c_[np.cos(th), np.sin(th), np.zeros(12)], [(i, (i + 1) % 12) for i in range(12)])
    b = decompose_branches(g, DELTA)
    _check_partition(g, b, DELTA)
    assert len(b) >= 3


def test_joint_to_joint_chain_claimed_once():
    # two joints linked by a chain: the chain belongs to one branch only
    verts = [[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0], [0, 1, 0], [0, -1, 0], [3, 1, 0], [3, -1, 0]]
    g = graph(verts, [(0, 1), (1, 2), (2, 3), (0, 4), (0, 5), (3, 6), (3, 7)])
    b = decompose_branches(g, np.pi)
    assert len(b) == 5
    _check_partition(g, b, np.pi + 1e-9)


def test_errors():
    with pytest.raises(ValueError, match="empty graph"):
        decompose_branches(graph(np.zeros((0, 3)), []), DELTA)
    with pytest.raises(ValueError):
        decompose_branches(path_graph(), 0.0)


@st.composite
def random_trees(draw):
    n = draw(st.integers(2, 25))
    parents = [draw(st.integers(0, i - 1)) for i in range(1, n)]
    coords = draw(st.lists(st.tuples(*[st.floats(-5, 5)] * 3), min_size=n, max_size=n, unique=True))
    return np.array(coords), [(p, i + 1) for i, p in enumerate(parents)]


@settings(max_examples=60, deadline=None)
@given(random_trees(), st.floats(0.2, np.pi))
def test_edge_partition_and_angle_bound(tree, delta):
    verts, edges = tree
    lengths = [np.linalg.norm(verts[a] - verts[b]) for a, b in edges]
    if min(lengths) < 1e-6:
        return
    g = graph(verts, edges)
    b = decompose_branches(g, delta)
    _check_partition(g, b, delta)


@settings(max_examples=40, deadline=None)
@given(random_trees())
def test_delta_180_gives_plain_chains(tree):
    verts, edges = tree
    if min(np.linalg.norm(verts[a] - verts[b]) for a, b in edges) < 1e-6:
        return
    g = graph(verts, edges)
    deg = g.degree()
    for br in decompose_branches(g, np.pi):
        inner = br.vertices[1:-1]
        assert all(deg[v] == 2 for v in inner)
        assert deg[br.vertices[0]] != 2 or deg[br.vertices[-1]] != 2 or len(find_joints(g)) == 0


def test_discretize():
    g = graph([[0, 0, 0], [1, 0, 0]], [(0, 1)])
    (b,) = decompose_branches(g, DELTA)
    o = discretize_branch(b, g.vertices, 0.5)
    assert np.allclose(o.positions[:, 0], [0, 0.5, 1])
    o = discretize_branch(b, g.vertices, 2.0)
    assert len(o) == 2


def test_discretize_right_angle_directions():
    from skelcover.decomposition import Branch
    V = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0.0]])
    o = discretize_branch(Branch(0, [(0, 1), (1, 2)], np.array([1.0, 0, 0])), V, 0.5)
    assert len(o) == 5
    assert np.degrees(undirected_angle(o.directions[0], o.directions[-1])) == pytest.approx(90)


def test_single_branch_takes_every_point():
    cloud, _ = scene("cylinder", n=4000)
    g = graph([[0, 0, z] for z in range(11)], [(i, i + 1) for i in range(10)])
    subs = allocate_space(cloud, decompose_branches(g, DELTA), g.vertices, 0.6)
    assert len(subs) == 1 and len(subs[0].points) == len(cloud)


def test_parallel_cylinders_are_pure(rng):
    a, _ = scene("cylinder", n=4000, radius=0.5)
    b = a.points + [6.0, 0, 0]
    cloud = PointCloud(np.vstack([a.points, b]))
    verts = [[0, 0, z] for z in range(11)] + [[6, 0, z] for z in range(11)]
    edges = [(i, i + 1) for i in range(10)] + [(11 + i, 12 + i) for i in range(10)]
    g = graph(verts, edges)
    subs = allocate_space(cloud, decompose_branches(g, DELTA), g.vertices, 0.6)
    lab = labels_of(subs, len(cloud))
    assert np.all(lab[:4000] == lab[0]) and np.all(lab[4000:] == lab[4000]) and lab[0] != lab[4000]


def test_equidistant_point_goes_to_lower_id():
    # two branches whose end points are equally far from the query point
    g = graph([[-1, 0, 0], [-3, 0, 0], [1, 0, 0], [3, 0, 0]], [(0, 1), (2, 3)])
    branches = decompose_branches(g, DELTA)
    pts = np.vstack([[0, 0, 0], np.random.default_rng(0).uniform(-3, 3, (200, 3))])
    subs = allocate_space(PointCloud(pts), branches, g.vertices, 2.0)
    lab = labels_of(subs, len(pts))
    assert lab[0] == 0


def test_partition_on_pipe_network():
    cloud, gt = scene("pipe_network")
    g = graph([p for s in gt.segments for p in s], [(2 * i, 2 * i + 1) for i in range(len(gt.segments))])
    subs = allocate_space(cloud, decompose_branches(g, DELTA), g.vertices, 0.6)
    counts = [len(s.points) for s in subs]
    assert sum(counts) == len(cloud)
    allp = np.concatenate([s.points for s in subs])
    assert len(np.unique(allp)) == len(cloud)
    assert np.all([s.owners.max() < len(s.planes) for s in subs if len(s.points)])


def test_exports(tmp_path):
    cloud, _ = scene("cylinder", n=4000)
    g = graph([[0, 0, z] for z in range(11)], [(i, i + 1) for i in range(10)])
    subs = allocate_space(cloud, decompose_branches(g, DELTA), g.vertices, 0.6)
    write_labels(subs, len(cloud), tmp_path / "l.txt")
    assert np.loadtxt(tmp_path / "l.txt").shape == (4000,)
    write_branch_table(subs, tmp_path / "b.csv")
    rows = (tmp_path / "b.csv").read_text().splitlines()
    assert rows[0] == "id,edges,points,ref_x,ref_y,ref_z" and rows[1].startswith("0,10,4000,")
