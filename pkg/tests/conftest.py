import contextlib
import functools
import math

import numpy as np
import pytest

from skelcover.config import PipelineConfig
from skelcover.geometry import OccupancyGrid, VoxelState
from skelcover.pipeline import run_pipeline
from skelcover.scenes import synth_scene
from skelcover.viewpoints import Viewpoint


@functools.lru_cache(maxsize=None)
def scene(kind: str, seed: int = 0, **params):
    return synth_scene(kind, params or None, seed=seed)


@functools.lru_cache(maxsize=None)
def full_run(kind: str, seed: int = 0):
    """Default-config pipeline run, shared across test modules."""
    cloud, _ = scene(kind, seed)
    return run_pipeline(PipelineConfig(seed=seed), cloud)


def random_grid(rng, n=64, density=0.02, vs=1.0):
    states = (rng.random((n, n, n)) < density).astype(np.uint8)
    return OccupancyGrid(np.zeros(3), vs, (n, n, n), states)


def empty_grid(dims=(40, 40, 20), vs=0.3, origin=(-6.0, -6.0, -1.0)):
    return OccupancyGrid(np.asarray(origin, float), vs, dims, np.zeros(dims, np.uint8))


def crossing_scene():
    """Two perpendicular rows of viewpoints meeting over a small block."""
    grid = empty_grid((60, 60, 20), 0.3, (-9, -9, -1))
    grid.states[29:31, 29:31, 0:2] = VoxelState.OCCUPIED
    xs = np.linspace(-6, 6, 9)
    a = [Viewpoint(np.array([x, 0.05, 2.0]), 0.0, 0.0, 0, uid=k) for k, x in enumerate(xs)]
    b = [Viewpoint(np.array([0.05, y, 2.5]), 0.0, math.pi / 2, 1, uid=9 + k) for k, y in enumerate(xs)]
    return grid, {0: a, 1: b}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance verdicts, echoed in the terminal summary
VERDICTS: list = []


@contextlib.contextmanager
def criterion(label: str):
    info = {"detail": ""}
    try:
        yield info
    except BaseException:
        VERDICTS.append(f"{label} FAIL  {info['detail']}")
        print(VERDICTS[-1])
        raise
    VERDICTS.append(f"{label} PASS  {info['detail']}")
    print(VERDICTS[-1])


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance")
        for line in sorted(VERDICTS, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
