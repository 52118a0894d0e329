"""Pipeline configuration: one flat set of tunables, loadable from TOML and
overridable through ``SKELCOVER_<KEY>`` environment variables."""

from __future__ import annotations

import dataclasses
import math
import os
import sys
from dataclasses import dataclass

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

ENV_PREFIX = "SKELCOVER_"


@dataclass
class PipelineConfig:
    # occupancy and skeleton
    voxel_size: float = 0.3          # m
    leaf: float = 0.05               # skeleton downsampling, unit-sphere frame
    # decomposition
    delta_deg: float = 45.0          # branch split angle
    plane_step: float | None = None  # oriented-plane spacing, m; default 2 * voxel_size
    # sensor and viewpoints
    dv: float = 4.0                  # visible distance, m
    D: float | None = None           # sampling distance, m; default 0.8 * dv
    fov_h_deg: float = 75.0          # vertical field of view
    fov_w_deg: float = 55.0          # horizontal field of view
    pitch_min_deg: float = -90.0
    pitch_max_deg: float = 70.0
    clearance: float = 0.6           # m
    max_rounds: int = 5
    icosphere_level: int = 2
    # planning
    v_max: float = 2.0
    omega_max: float = 1.0
    a_max: float = 1.0
    j_max: float = 0.5
    K: int = 10000                   # refinement iterations
    r_jc: float | None = None        # junction radius, m; default twice the merge radius
    refine: bool = True
    start: list | None = None        # start position; default a low corner of the grid
    # trajectory
    trajectory: bool = True
    sample_rate: float = 10.0        # Hz, trajectory CSV export
    # run
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        positive = ["voxel_size", "leaf", "dv", "clearance", "v_max", "omega_max", "a_max", "j_max",
                    "sample_rate"]
        for k in positive:
            v = getattr(self, k)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"{k} must be a positive number")
        for k in ("plane_step", "D", "r_jc"):
            v = getattr(self, k)
            if v is not None and not v > 0:
                raise ValueError(f"{k} must be positive")
        if not 0 < self.delta_deg <= 180:
            raise ValueError("delta_deg must lie in (0, 180]")
        for k in ("fov_h_deg", "fov_w_deg"):
            if not 0 < getattr(self, k) < 180:
                raise ValueError(f"{k} must lie in (0, 180)")
        if not -90 <= self.pitch_min_deg <= self.pitch_max_deg <= 90:
            raise ValueError("gimbal range must satisfy -90 <= pitch_min <= pitch_max <= 90")
        if self.D is not None and self.D > self.dv:
            raise ValueError("D must not exceed dv")
        for k in ("max_rounds", "K", "workers"):
            if getattr(self, k) < (1 if k == "workers" else 0):
                raise ValueError(f"{k} out of range")
        if not 0 <= self.icosphere_level <= 5:
            raise ValueError("icosphere_level must lie in [0, 5]")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.start is not None and len(self.start) != 3:
            raise ValueError("start must have three coordinates")

    @property
    def step(self) -> float:
        return 2 * self.voxel_size if self.plane_step is None else self.plane_step

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **kw) -> "PipelineConfig":
        return dataclasses.replace(self, **kw)


FIELDS = {f.name: f for f in dataclasses.fields(PipelineConfig)}


def _coerce(name: str, value):
    """Type-check one value against the field's annotation."""
    ann = str(FIELDS[name].type)
    if value is None:
        if "None" in ann:
            return None
        raise ValueError(f"{name} must not be empty")
    if ann.startswith("bool"):
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("1", "true", "yes", "0", "false", "no"):
            return value.lower() in ("1", "true", "yes")
        raise ValueError(f"{name} must be a boolean")
    if ann.startswith("int"):
        if isinstance(value, bool):
            raise ValueError(f"{name} must be an integer")
        try:
            iv = int(value)
        except (TypeError, ValueError):
            raise ValueError(f"{name} must be an integer") from None
        if isinstance(value, float) and value != iv:
            raise ValueError(f"{name} must be an integer")
        return iv
    if ann.startswith("list"):
        if isinstance(value, str):
            value = [v for v in value.replace(",", " ").split()]
        try:
            return [float(v) for v in value]
        except (TypeError, ValueError):
            raise ValueError(f"{name} must be a list of numbers") from None
    if isinstance(value, bool):
        raise ValueError(f"{name} must be a number")
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ValueError(f"{name} must be a number") from None


def from_mapping(values: dict, base: PipelineConfig | None = None) -> PipelineConfig:
    unknown = sorted(set(values) - set(FIELDS))
    if unknown:
        raise ValueError(f"unknown configuration keys: {', '.join(unknown)}")
    merged = (base or PipelineConfig()).to_dict()
    merged.update({k: _coerce(k, v) for k, v in values.items()})
    return PipelineConfig(**merged)


def env_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out = {}
    for key, raw in environ.items():
        if not key.startswith(ENV_PREFIX):
            continue
        name = key[len(ENV_PREFIX):].lower()
        match = next((f for f in FIELDS if f.lower() == name), None)
        if match is None:
            raise ValueError(f"unknown configuration key in environment: {key}")
        out[match] = None if raw.strip().lower() in ("", "none") else raw
    return out


def load_config(path=None, environ=None, **overrides) -> PipelineConfig:
    """File values, then environment, then explicit keyword overrides."""
    values = {}
    if path is not None:
        with open(path, "rb") as fh:
            try:
                values = tomllib.load(fh)
            except tomllib.TOMLDecodeError as e:
                raise ValueError(f"{path}: {e}") from None
        nested = [k for k, v in values.items() if isinstance(v, dict)]
        if nested:
            raise ValueError(f"unknown configuration keys: {', '.join(nested)}")
    values.update(env_overrides(environ))
    values.update({k: v for k, v in overrides.items() if v is not None})
    return from_mapping(values)


def dump_config(cfg: PipelineConfig) -> str:
    lines = []
    for k, v in cfg.to_dict().items():
        if v is None:
            lines.append(f"# {k} = (derived)")
        elif isinstance(v, bool):
            lines.append(f"{k} = {'true' if v else 'false'}")
        elif isinstance(v, list):
            lines.append(f"{k} = [{', '.join(repr(float(x)) for x in v)}]")
        else:
            lines.append(f"{k} = {v!r}")
    return "\n".join(lines) + "\n"


__all__ = ["PipelineConfig", "load_config", "from_mapping", "env_overrides", "dump_config", "ENV_PREFIX"]
