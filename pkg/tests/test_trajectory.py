import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import empty_grid
from oracles import rest_to_rest_lower_bound
from skelcover.geometry import VoxelState
from skelcover.planner import DynamicLimits, TravelCost, build_path, start_viewpoint
from skelcover.trajectory import (CorridorError, Trajectory, build_corridors, corridors_for_knots,
                                  generate_trajectory, path_knots, quintic, validate_trajectory,
                                  write_samples_csv)
from skelcover.viewpoints import Viewpoint

LIMITS = DynamicLimits(2.0, 1.0, 1.0, 0.5)


def vp(p, uid, pitch=0.0, yaw=0.0):
    return Viewpoint(np.asarray(p, float), pitch, yaw, 0, uid=uid)


def knots_corridor(knots, grid=None, clearance=0.0):
    grid = grid or empty_grid((40, 40, 20), 0.3, (-6, -6, -1))
    return corridors_for_knots(np.asarray(knots, float), np.ones(len(knots), bool), grid, clearance)


@pytest.fixture(scope="module")
def doorway():
    """A wall at x = 0 with a 1.2 m square opening, and a path through it."""
    grid = empty_grid((40, 40, 20), 0.3, (-6, -6, -1))
    grid.states[20, :, :] = VoxelState.OCCUPIED
    grid.states[20, 18:22, 5:9] = VoxelState.FREE
    c = TravelCost(grid, LIMITS, 0.2)
    path = build_path([start_viewpoint([-4, -3, 4]), vp([4, 3, 1], 0, 0.2, 1.0)], c)
    return grid, path


# ------------------------------------------------------------ corridors

def test_straight_path_one_box():
    grid = empty_grid()
    c = TravelCost(grid, LIMITS, 0.3)
    path = build_path([start_viewpoint([-3, 0, 2]), vp([0, 0, 2], 0), vp([3, 0, 2], 1)], c)
    cor = build_corridors(path, grid, 0.3)
    assert len(cor.boxes) == 1 and np.all(cor.assignment == 0)


def test_doorway_needs_overlapping_boxes(doorway):
    grid, path = doorway
    cor = build_corridors(path, grid, 0.2)
    assert len(cor.boxes) >= 2
    for b0, b1 in zip(cor.boxes[:-1], cor.boxes[1:]):
        assert np.all(np.maximum(b0[0], b1[0]) <= np.minimum(b0[1], b1[1]))
    # some consecutive overlap straddles the wall plane
    wall_x = grid.center_of((20, 0, 0))[0]
    spans = [np.maximum(b0[0], b1[0])[0] <= wall_x <= np.minimum(b0[1], b1[1])[0]
             for b0, b1 in zip(cor.boxes[:-1], cor.boxes[1:])]
    holds = [b[0, 0] <= wall_x <= b[1, 0] for b in cor.boxes]
    assert any(spans) or any(holds)


def test_boxes_hold_no_blocked_centre(doorway):
    grid, path = doorway
    cor = build_corridors(path, grid, 0.2)
    centres = grid.center_of(np.argwhere(grid.blocked_mask(0.2)))
    for lo, hi in cor.boxes:
        inside = np.all((centres >= lo) & (centres <= hi), axis=1)
        assert not inside.any()


def test_every_piece_inside_its_box(doorway):
    grid, path = doorway
    cor = build_corridors(path, grid, 0.2)
    for i in range(cor.n_pieces):
        lo, hi = cor.boxes[cor.assignment[i]]
        for p in cor.knots[i:i + 2, :3]:
            assert np.all(p >= lo - 1e-12) and np.all(p <= hi + 1e-12)


def test_waypoint_in_collision_fails():
    grid = empty_grid()
    grid.states[20, 20, 10] = VoxelState.OCCUPIED
    with pytest.raises(CorridorError, match="corridor failure"):
        knots_corridor([[0.15, 0.15, 2.15, 0, 0], [2, 0, 2, 0, 0]], grid)


def test_knots_unwrap_yaw():
    grid = empty_grid()
    c = TravelCost(grid, LIMITS, 0.3)
    path = build_path([vp([0, 0, 2], 0, yaw=3.0), vp([1, 0, 2], 1, yaw=-3.0), vp([2, 0, 2], 2, yaw=3.0)], c)
    K, stop = path_knots(path)
    assert np.all(np.abs(np.diff(K[:, 4])) < math.pi)
    assert K[-1, 4] == pytest.approx(3.0)
    assert stop[0] and stop[-1]


# ------------------------------------------------------------ timing

def test_quintic_hits_boundary_states():
    c = quintic([0.0], [1.0], [0.5], [2.0], [-1.0], [0.2], 3.0)[0]
    tr = Trajectory(np.array([3.0]), np.repeat(c[None, None], 5, axis=1))
    assert tr.evaluate([0, 3])[:, 0] == pytest.approx([0, 2])
    assert tr.evaluate([0, 3], 1)[:, 0] == pytest.approx([1, -1])
    assert tr.evaluate([0, 3], 2)[:, 0] == pytest.approx([0.5, 0.2])


def test_jerk_limited_lower_bound():
    bound = rest_to_rest_lower_bound(1.0, 2.0, 1.0, 0.5)
    # pure jerk bang-bang with four equal phases reaches 1 m in 4 s
    assert bound == pytest.approx(4.0, rel=0.02)
    cor = knots_corridor([[0, 0, 2, 0, 0], [1, 0, 2, 0, 0]])
    tr = generate_trajectory(cor, LIMITS)
    assert tr.total_time >= bound
    assert validate_trajectory(tr, cor, LIMITS).passed


def test_pure_turn_respects_rate():
    cor = knots_corridor([[0, 0, 2, 0, 0], [0, 0, 2, 0, math.pi / 2]])
    tr = generate_trajectory(cor, LIMITS)
    assert tr.total_time >= math.pi / 2
    rep = validate_trajectory(tr, cor, LIMITS)
    assert rep.passed and rep.max_yaw_rate <= 1.0 + 1e-6


def test_doorway_trajectory_passes(doorway):
    grid, path = doorway
    cor = build_corridors(path, grid, 0.2)
    tr = generate_trajectory(cor, LIMITS)
    rep = validate_trajectory(tr, cor, LIMITS)
    assert rep.passed, rep.violations
    assert rep.waypoint_error <= 1e-6 and rep.continuity <= 1e-6


def test_halved_durations_flag_velocity():
    cor = knots_corridor([[-4, 0, 2, 0, 0], [-2, 0.5, 2, 0, 0], [2, -0.5, 2, 0, 0], [4, 0, 2, 0, 0]])
    # loose acceleration and jerk bounds so that speed is what binds
    lim = DynamicLimits(1.0, 1.0, 50.0, 500.0)
    tr = generate_trajectory(cor, lim)
    assert validate_trajectory(tr, cor, lim).max_v > 0.9
    fast = Trajectory(tr.durations / 2, tr.coeffs * (2.0 ** np.arange(6)))
    rep = validate_trajectory(fast, cor, lim)
    assert "velocity" in rep.violations and not rep.passed


def test_shifted_piece_flags_corridor():
    grid = empty_grid()
    cor = knots_corridor([[-1, 0, 2, 0, 0], [1, 0, 2, 0, 0]], grid)
    tr = generate_trajectory(cor, LIMITS)
    shifted = tr.coeffs.copy()
    shifted[0, 1, 0] += 5.0
    rep = validate_trajectory(Trajectory(tr.durations, shifted), cor, LIMITS)
    assert "corridor" in rep.violations


def test_tight_corridor_freezes_junction():
    # a zig-zag in a narrow slot: overshoot at the corner is not allowed
    grid = empty_grid((40, 40, 20), 0.3, (-6, -6, -1))
    grid.states[:, :, :] = VoxelState.OCCUPIED
    grid.states[5:35, 19:21, 9:11] = VoxelState.FREE
    grid.states[33:35, 19:35, 9:11] = VoxelState.FREE
    a, b, c = grid.center_of([(6, 19, 9), (33, 19, 9), (33, 34, 9)])
    cor = corridors_for_knots(np.array([[*a, 0, 0], [*b, 0, 0], [*c, 0, 0]]), np.ones(3, bool), grid, 0.0)
    tr = generate_trajectory(cor, LIMITS)
    rep = validate_trajectory(tr, cor, LIMITS)
    assert rep.passed, rep.violations


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 5), st.floats(0.5, 10), st.floats(1.01, 3))
def test_dilation_never_raises_peaks(L, T, s):
    from skelcover.trajectory import _deriv, _poly_max_norm
    a = quintic([0.0], [0.0], [0.0], [L], [0.0], [0.0], T)
    b = quintic([0.0], [0.0], [0.0], [L], [0.0], [0.0], s * T)
    for _ in range(3):
        a, b = _deriv(a), _deriv(b)
        assert _poly_max_norm(b, s * T) <= _poly_max_norm(a, T) + 1e-12


def test_relaxed_speed_never_slows_down(doorway):
    grid, path = doorway
    cor = build_corridors(path, grid, 0.2)
    times = [generate_trajectory(cor, DynamicLimits(v, 1.0, 1.0, 0.5)).total_time for v in (0.5, 1.0, 2.0, 4.0)]
    assert all(x >= y - 1e-9 for x, y in zip(times, times[1:]))


def test_single_knot_gives_empty_trajectory():
    cor = knots_corridor([[0, 0, 2, 0, 0]])
    tr = generate_trajectory(cor, LIMITS)
    assert tr.total_time == 0 and validate_trajectory(tr, cor, LIMITS).passed


def test_evaluate_derivative_matches_difference(doorway):
    grid, path = doorway
    cor = build_corridors(path, grid, 0.2)
    tr = generate_trajectory(cor, LIMITS)
    t = np.linspace(0.1, tr.total_time - 0.1, 50)
    h = 1e-6
    num = (tr.evaluate(t + h) - tr.evaluate(t - h)) / (2 * h)
    assert np.allclose(num, tr.evaluate(t, 1), atol=1e-5)


def test_exports(tmp_path, doorway):
    grid, path = doorway
    cor = build_corridors(path, grid, 0.2)
    tr = generate_trajectory(cor, LIMITS)
    write_samples_csv(tr, tmp_path / "t.csv", rate=10)
    rows = (tmp_path / "t.csv").read_text().splitlines()
    assert rows[0] == "t,x,y,z,pitch,yaw,vx,vy,vz"
    last = [float(x) for x in rows[-1].split(",")]
    assert last[0] == pytest.approx(tr.total_time, abs=1e-6)
    assert np.allclose(last[1:4], path.viewpoints[-1].position, atol=1e-6)
    data = json.loads(tr.to_json())
    assert len(data["pieces"]) == cor.n_pieces
    assert np.array(data["pieces"][0]["coefficients"]).shape == (5, 6)
