"""Run configuration: camera, grid, budgets, action magnitudes, backend.

All knobs live in dataclasses so experiments can tweak them without touching
code. `load_config` reads overrides from a TOML or JSON file; missing keys
keep their defaults.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


@dataclass(frozen=True)
class CameraConfig:
    width: int = 640
    height: int = 480
    hfov_deg: float = 90.0
    max_range_m: float = 200.0


@dataclass(frozen=True)
class GridConfig:
    side_m: float = 400.0
    resolution_m: float = 1.0


@dataclass(frozen=True)
class BudgetConfig:
    nav_explore_steps: int = 50
    collection_steps: int = 10


@dataclass(frozen=True)
class MagnitudeConfig:
    # Coarse controllers: path chunks and baseline moves/turns.
    nav_step_m: float = 10.0
    explore_spacing_m: float = 10.0
    explore_agent_region_m: float = 60.0
    region_depth_m: float = 60.0
    region_margin_m: float = 20.0
    arrival_tolerance_m: float = 5.0
    baseline_move_m: float = 10.0
    baseline_turn_deg: float = 30.0
    # Fine controller used while collecting information up close.
    collect_move_m: float = 3.0
    collect_turn_deg: float = 15.0


@dataclass(frozen=True)
class PerceptionConfig:
    min_segment_pixels: int = 10
    min_detect_pixels: int = 50
    min_points_per_cell: int = 3


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "scripted"  # scripted | replay | http
    base_url: str = "http://localhost:8000/v1"
    model: str = "gpt-4o"
    api_key_env: str = "EQALAB_API_KEY"
    timeout_s: float = 60.0
    retries: int = 3


@dataclass(frozen=True)
class Config:
    camera: CameraConfig = field(default_factory=CameraConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    budgets: BudgetConfig = field(default_factory=BudgetConfig)
    magnitudes: MagnitudeConfig = field(default_factory=MagnitudeConfig)
    perception: PerceptionConfig = field(default_factory=PerceptionConfig)
    backend: BackendConfig = field(default_factory=BackendConfig)
    agent_altitude_m: float = 10.0
    subtask_retries: int = 1
    ne_mode: str = "3d"  # 3d | 2d


def desk_config() -> Config:
    """Small camera and coarse grid for fast desk-scale runs and tests."""
    return replace(
        Config(),
        camera=CameraConfig(width=64, height=48, hfov_deg=90.0, max_range_m=160.0),
        grid=GridConfig(side_m=240.0, resolution_m=2.0),
    )


def _merge_section(cls, defaults, data: dict):
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ValueError(f"unknown config key: {cls.__name__}.{key}")
        kwargs[key] = value
    return replace(defaults, **kwargs)


def load_config(path: str | Path, base: Config | None = None) -> Config:
    """Load a TOML or JSON config file on top of `base` (defaults if None)."""
    path = Path(path)
    raw = path.read_bytes()
    if path.suffix == ".json":
        data = json.loads(raw)
    else:
        data = tomllib.loads(raw.decode("utf-8"))
    cfg = base or Config()
    sections = {
        "camera": (CameraConfig, cfg.camera),
        "grid": (GridConfig, cfg.grid),
        "budgets": (BudgetConfig, cfg.budgets),
        "magnitudes": (MagnitudeConfig, cfg.magnitudes),
        "perception": (PerceptionConfig, cfg.perception),
        "backend": (BackendConfig, cfg.backend),
    }
    updates = {}
    for key, value in data.items():
        if key in sections:
            cls, defaults = sections[key]
            updates[key] = _merge_section(cls, defaults, value)
        elif key in ("agent_altitude_m", "subtask_retries", "ne_mode"):
            updates[key] = value
        else:
            raise ValueError(f"unknown config section: {key}")
    return replace(cfg, **updates)
