"""Skeleton-guided coverage path planning for UAV inspection of point-cloud scenes."""

from .config import PipelineConfig, load_config
from .geometry import OccupancyGrid, PlanningError, PointCloud, VoxelState
from .io import load_cloud
from .pipeline import CoverageReport, compute_coverage_rate, run_ablation, run_pipeline
from .scenes import synth_scene

__version__ = "0.1.0"

__all__ = [
    "CoverageReport", "OccupancyGrid", "PipelineConfig", "PlanningError", "PointCloud", "VoxelState",
    "compute_coverage_rate", "load_cloud", "load_config", "run_ablation", "run_pipeline", "synth_scene",
]
