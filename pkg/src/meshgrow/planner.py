"""Two-stage viewpoint selection.

Generation stage: predefined trajectories (interpolated start/end poses)
with camera backoff — step backwards along the look-at axis until the view
shows enough free space. Completion stage: voxelize the scene bounding box,
sample candidate poses per cell, keep the one seeing the most unobserved
pixels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

from .geometry import Camera, GeometryError, Pose, TriangleMesh, camera_from_fov, look_at
from .imaging import mask_stats
from .rasterizer import render

BACKOFF_STEP = 0.3
BACKOFF_DEPTH_THRESHOLD = 0.1
BACKOFF_MAX_STEPS = 10

NEAR_THRESHOLD = 0.1
CELL_EDGE = 1.0
CANDIDATES_PER_CELL = 16
PITCH_RANGE_DEG = (-30.0, 30.0)

WORLD_UP = (0.0, 1.0, 0.0)

FLOOR_PROMPT = "floor"
CEILING_PROMPT = "ceiling"


@dataclass
class Trajectory:
    start: Pose
    end: Pose
    frames: int
    prompt: str
    prompt_overrides: dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.frames < 1:
            raise GeometryError("trajectory needs at least one frame")


@dataclass
class PoseSchedule:
    entries: list[tuple[Camera, str]]
    trajectories: list[Trajectory]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class CompletionConfig:
    cell_edge: float = CELL_EDGE
    candidates_per_cell: int = CANDIDATES_PER_CELL
    near_threshold: float = NEAR_THRESHOLD
    pitch_range_deg: tuple[float, float] = PITCH_RANGE_DEG
    yaw_range_deg: tuple[float, float] = (0.0, 360.0)
    seed: int = 0
    width: int = 128
    height: int = 128
    fov_deg: float = 75.0

    def __post_init__(self):
        if self.cell_edge <= 0:
            raise GeometryError("cell edge must be positive")
        if self.candidates_per_cell < 1:
            raise GeometryError("need at least one candidate per cell")


def interpolate_trajectory(trajectory: Trajectory) -> list[Pose]:
    """Poses along the trajectory: positions lerped, orientations slerped,
    endpoints exact."""
    if trajectory.frames == 1:
        return [trajectory.start]

    start, end = trajectory.start, trajectory.end
    alphas = np.linspace(0.0, 1.0, trajectory.frames)
    slerp = Slerp([0.0, 1.0], Rotation.from_matrix(
        np.stack([start.rotation, end.rotation])))
    rots = slerp(alphas).as_matrix()
    centers = np.outer(1.0 - alphas, start.center) + np.outer(alphas, end.center)

    poses = [Pose(r, -r @ c) for r, c in zip(rots, centers)]
    poses[0], poses[-1] = start, end
    return poses


def backoff_camera(mesh: TriangleMesh, camera: Camera,
                   step: float = BACKOFF_STEP,
                   depth_threshold: float = BACKOFF_DEPTH_THRESHOLD,
                   max_steps: int = BACKOFF_MAX_STEPS,
                   ) -> tuple[Camera, int] | None:
    """Translate the camera backwards along its look-at axis until the mean
    observed depth exceeds depth_threshold (views with no observed pixels
    pass immediately). Returns (camera, steps taken), or None after
    max_steps translations fail."""
    rot = camera.pose.rotation
    forward = camera.pose.forward
    start = camera.pose.center
    for i in range(max_steps + 1):
        center = start - step * i * forward
        candidate = camera.with_pose(Pose(rot, -rot @ center))
        _, mean_depth = mask_stats(render(mesh, candidate))
        if mean_depth is None or mean_depth > depth_threshold:
            return candidate, i
    return None


def yaw_pitch_forward(yaw_rad: float, pitch_rad: float) -> np.ndarray:
    """Look direction for yaw about +y and pitch above the horizon."""
    cp = math.cos(pitch_rad)
    return np.array([cp * math.sin(yaw_rad), math.sin(pitch_rad),
                     cp * math.cos(yaw_rad)])


def sample_completion_poses(mesh: TriangleMesh, cfg: CompletionConfig) -> list[Camera]:
    """One pose per bounding-box cell: the sampled candidate that views the
    most unobserved pixels, skipping candidates too close to geometry.
    Deterministic in (mesh, cfg) including the seed."""
    if mesh.num_vertices == 0:
        raise GeometryError("cannot sample completion poses on an empty mesh")

    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    ncells = np.maximum(1, np.ceil((hi - lo) / cfg.cell_edge).astype(int))
    rng = np.random.default_rng(cfg.seed)

    yaw_lo, yaw_hi = (math.radians(v) for v in cfg.yaw_range_deg)
    pitch_lo, pitch_hi = (math.radians(v) for v in cfg.pitch_range_deg)

    selected: list[Camera] = []
    for ix in range(ncells[0]):
        for iy in range(ncells[1]):
            for iz in range(ncells[2]):
                cell_lo = lo + np.array([ix, iy, iz]) * cfg.cell_edge
                best: Camera | None = None
                best_unobserved = 0
                for _ in range(cfg.candidates_per_cell):
                    pos = cell_lo + rng.uniform(size=3) * cfg.cell_edge
                    yaw = rng.uniform(yaw_lo, yaw_hi)
                    pitch = rng.uniform(pitch_lo, pitch_hi)
                    pose = look_at(pos, pos + yaw_pitch_forward(yaw, pitch), WORLD_UP)
                    cam = camera_from_fov(cfg.width, cfg.height, cfg.fov_deg, pose)
                    frame = render(mesh, cam)
                    observed = ~frame.mask
                    if observed.any() and frame.depth[observed].min() < cfg.near_threshold:
                        continue
                    unobserved = int(frame.mask.sum())
                    if unobserved > best_unobserved:
                        best_unobserved = unobserved
                        best = cam
                if best is not None:
                    selected.append(best)
    return selected


def default_trajectories(scene_prompt: str,
                         eye_height: float = 1.4,
                         orbit_radius: float = 0.8,
                         frames: int = 10) -> list[Trajectory]:
    """Twenty room-scale trajectories circling the origin: twelve eye-level
    azimuth sweeps plus four floor and four ceiling sweeps with restricted
    prompts."""
    center = np.array([0.0, eye_height, 0.0])
    trajectories: list[Trajectory] = []

    def pose(yaw_deg: float, pitch_deg: float, eye: np.ndarray) -> Pose:
        fwd = yaw_pitch_forward(math.radians(yaw_deg), math.radians(pitch_deg))
        return look_at(eye, eye + fwd, WORLD_UP)

    for k in range(12):
        yaw0 = 30.0 * k
        yaw1 = yaw0 + 30.0
        eye0 = center - orbit_radius * yaw_pitch_forward(math.radians(yaw0), 0.0)
        eye1 = center - orbit_radius * yaw_pitch_forward(math.radians(yaw1), 0.0)
        trajectories.append(Trajectory(pose(yaw0, 0.0, eye0), pose(yaw1, 0.0, eye1),
                                       frames, scene_prompt))

    for k in range(4):
        yaw = 90.0 * k
        eye = center + np.array([0.0, 0.2, 0.0])
        trajectories.append(Trajectory(pose(yaw - 45.0, -50.0, eye),
                                       pose(yaw + 45.0, -50.0, eye),
                                       frames, FLOOR_PROMPT))

    for k in range(4):
        yaw = 90.0 * k + 45.0
        eye = center - np.array([0.0, 0.2, 0.0])
        trajectories.append(Trajectory(pose(yaw - 45.0, 50.0, eye),
                                       pose(yaw + 45.0, 50.0, eye),
                                       frames, CEILING_PROMPT))
    return trajectories


def build_generation_schedule(trajectories: list[Trajectory],
                              width: int, height: int,
                              fov_deg: float) -> PoseSchedule:
    """Flatten trajectories into the ordered (camera, prompt) list,
    honoring per-frame prompt overrides."""
    entries: list[tuple[Camera, str]] = []
    for traj in trajectories:
        for idx, pose in enumerate(interpolate_trajectory(traj)):
            prompt = traj.prompt_overrides.get(idx, traj.prompt)
            entries.append((camera_from_fov(width, height, fov_deg, pose), prompt))
    return PoseSchedule(entries=entries, trajectories=list(trajectories))
