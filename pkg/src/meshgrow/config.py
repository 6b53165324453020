"""Run configuration: YAML schema, validation, and shipped defaults.

Unknown keys anywhere in the file are rejected so typos fail loudly.
The shipped defaults carry the canonical thresholds: edge filter 0.1,
grazing filter 0.1, backoff step 0.3 / depth 0.1 / max 10 steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import depth_align, fusion, planner
from .geometry import GeometryError, look_at
from .planner import Trajectory


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


@dataclass
class FrameConfig:
    width: int = 128
    height: int = 128
    fov_deg: float = 75.0


@dataclass
class ThresholdConfig:
    edge_length: float = fusion.EDGE_THRESHOLD
    grazing: float = fusion.GRAZING_THRESHOLD
    backoff_step: float = planner.BACKOFF_STEP
    backoff_depth: float = planner.BACKOFF_DEPTH_THRESHOLD
    backoff_max_steps: int = planner.BACKOFF_MAX_STEPS
    removal_depth_eps: float = fusion.REMOVAL_DEPTH_EPS


@dataclass
class CompletionSettings:
    cell_edge: float = planner.CELL_EDGE
    candidates_per_cell: int = planner.CANDIDATES_PER_CELL
    near_threshold: float = planner.NEAR_THRESHOLD
    pitch_range_deg: tuple[float, float] = planner.PITCH_RANGE_DEG
    yaw_range_deg: tuple[float, float] = (0.0, 360.0)
    rounds: int = 3
    prompt: str | None = None  # None = reuse the scene prompt


@dataclass
class OracleConfig:
    room_extents: tuple[float, float, float] = (6.0, 3.0, 4.0)
    texture_seed: int = 0
    depth_scale: float = 1.0


@dataclass
class PipelineConfig:
    frame: FrameConfig = field(default_factory=FrameConfig)
    scene_prompt: str = "a cozy furnished living room"
    seed: int = 0
    trajectories: list[Trajectory] | None = None  # None = shipped defaults
    thresholds: ThresholdConfig = field(default_factory=ThresholdConfig)
    completion: CompletionSettings = field(default_factory=CompletionSettings)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    snapshots: bool = False
    halt_on_backend_error: bool | None = None  # None = true for remote only

    def generation_trajectories(self) -> list[Trajectory]:
        if self.trajectories is not None:
            return self.trajectories
        return planner.default_trajectories(self.scene_prompt)


def _take(section: dict, allowed: dict, where: str) -> dict:
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")
    out = {}
    for key, caster in allowed.items():
        if key in section:
            try:
                out[key] = caster(section[key])
            except (TypeError, ValueError) as err:
                raise ConfigError(f"bad value for {where}.{key}: {err}")
    return out


def _vec3(value) -> tuple[float, float, float]:
    vals = [float(v) for v in value]
    if len(vals) != 3:
        raise ValueError("expected 3 numbers")
    return tuple(vals)


def _range2(value) -> tuple[float, float]:
    vals = [float(v) for v in value]
    if len(vals) != 2:
        raise ValueError("expected 2 numbers")
    return tuple(vals)


def _overrides(value) -> dict[int, str]:
    return {int(k): str(v) for k, v in dict(value).items()}


def _parse_trajectory(entry: dict, index: int) -> Trajectory:
    where = f"trajectories[{index}]"
    fields = _take(entry, {
        "eye_start": _vec3, "target_start": _vec3,
        "eye_end": _vec3, "target_end": _vec3,
        "up": _vec3, "frames": int, "prompt": str,
        "prompt_overrides": _overrides,
    }, where)
    for required in ("eye_start", "target_start", "eye_end", "target_end", "prompt"):
        if required not in fields:
            raise ConfigError(f"{where} is missing '{required}'")
    up = fields.get("up", (0.0, 1.0, 0.0))
    try:
        start = look_at(fields["eye_start"], fields["target_start"], up)
        end = look_at(fields["eye_end"], fields["target_end"], up)
        return Trajectory(start, end, fields.get("frames", 10), fields["prompt"],
                          fields.get("prompt_overrides", {}))
    except GeometryError as err:
        raise ConfigError(f"{where}: {err}")


def config_from_dict(raw: dict) -> PipelineConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    top = _take(raw, {
        "frame": dict, "scene_prompt": str, "seed": int, "trajectories": list,
        "thresholds": dict, "completion": dict, "oracle": dict,
        "snapshots": bool, "halt_on_backend_error": bool,
    }, "config")

    cfg = PipelineConfig()
    if "frame" in top:
        cfg.frame = FrameConfig(**_take(top["frame"], {
            "width": int, "height": int, "fov_deg": float}, "frame"))
    if "scene_prompt" in top:
        cfg.scene_prompt = top["scene_prompt"]
    if "seed" in top:
        cfg.seed = top["seed"]
    if "trajectories" in top:
        cfg.trajectories = [_parse_trajectory(e, i)
                            for i, e in enumerate(top["trajectories"])]
    if "thresholds" in top:
        cfg.thresholds = ThresholdConfig(**_take(top["thresholds"], {
            "edge_length": float, "grazing": float, "backoff_step": float,
            "backoff_depth": float, "backoff_max_steps": int,
            "removal_depth_eps": float}, "thresholds"))
    if "completion" in top:
        section = _take(top["completion"], {
            "cell_edge": float, "candidates_per_cell": int,
            "near_threshold": float, "pitch_range_deg": _range2,
            "yaw_range_deg": _range2, "rounds": int, "prompt": str}, "completion")
        cfg.completion = CompletionSettings(**section)
    if "oracle" in top:
        cfg.oracle = OracleConfig(**_take(top["oracle"], {
            "room_extents": _vec3, "texture_seed": int,
            "depth_scale": float}, "oracle"))
    if "snapshots" in top:
        cfg.snapshots = top["snapshots"]
    if "halt_on_backend_error" in top:
        cfg.halt_on_backend_error = top["halt_on_backend_error"]

    if cfg.frame.width < 2 or cfg.frame.height < 2:
        raise ConfigError("frame must be at least 2x2 pixels")
    if not 0 < cfg.frame.fov_deg < 180:
        raise ConfigError("fov_deg must be in (0, 180)")
    if cfg.completion.rounds < 0:
        raise ConfigError("completion rounds must be >= 0")
    return cfg


def load_config(path) -> PipelineConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as err:
        raise ConfigError(f"cannot parse {path}: {err}")
    return config_from_dict(raw if raw is not None else {})
