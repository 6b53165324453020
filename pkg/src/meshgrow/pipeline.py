"""End-to-end orchestration of the two generation stages.

Each iteration follows render -> inpaint RGB -> predict-and-align depth ->
stitch-and-fuse. Iterations are atomic: the scene mesh is only replaced
once a full iteration succeeded. The completion stage additionally cleans
the inpainting mask (classical fill for small holes, dilation for the
rest) and removes faces the regenerated region replaces.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import shlex
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import backends, depth_align, fusion, imaging, meshio, planner
from .config import PipelineConfig
from .geometry import Camera, FrameBundle, NO_HIT, TriangleMesh, camera_from_fov, look_at
from .planner import PoseSchedule
from .rasterizer import render

log = logging.getLogger(__name__)


@dataclass
class IterationRecord:
    stage: str
    index: int
    eye: list[float]
    forward: list[float]
    prompt: str
    gamma: float | None = None
    beta: float | None = None
    faces_added: int = 0
    faces_removed: int = 0
    unobserved: int = 0
    backoff_steps: int | None = None
    skipped: str | None = None
    vertices_total: int = 0
    faces_total: int = 0


@dataclass
class SceneState:
    config: PipelineConfig
    mesh: TriangleMesh = field(default_factory=TriangleMesh.empty)
    records: list[IterationRecord] = field(default_factory=list)
    out_dir: Path | None = None

    def halt_on_backend_error(self, session: backends.BackendSession) -> bool:
        if self.config.halt_on_backend_error is not None:
            return self.config.halt_on_backend_error
        return session.mode == "remote"


def _log_record(state: SceneState, record: IterationRecord) -> None:
    state.records.append(record)
    if state.out_dir is not None:
        with open(state.out_dir / "run_log.jsonl", "a") as fh:
            fh.write(json.dumps(dataclasses.asdict(record)) + "\n")


def _snapshot(state: SceneState, record: IterationRecord, frame: FrameBundle) -> None:
    if not state.config.snapshots or state.out_dir is None:
        return
    snap = state.out_dir / "snapshots"
    snap.mkdir(exist_ok=True)
    tag = f"{record.stage}_{record.index:04d}"
    imaging.save_rgb_png(frame.inpainted_rgb if frame.inpainted_rgb is not None
                         else frame.rgb, snap / f"{tag}_rgb.png")
    imaging.save_depth_png(frame.aligned_depth if frame.aligned_depth is not None
                           else frame.depth, snap / f"{tag}_depth.png")


def _fuse_frame(state: SceneState, mesh: TriangleMesh, frame: FrameBundle,
                camera: Camera, session: backends.BackendSession, prompt: str,
                record: IterationRecord,
                inpaint_mask: np.ndarray | None = None) -> TriangleMesh:
    """Backend calls plus fusion for one frame; returns the new mesh without
    touching the state (the caller commits)."""
    session.camera = camera
    mask = frame.mask if inpaint_mask is None else inpaint_mask
    frame.inpainted_rgb = backends.inpaint_rgb(session, frame.rgb, mask, prompt)
    aligned, fit = depth_align.predict_and_align(session, frame)
    frame.aligned_depth = aligned
    record.gamma, record.beta = fit.gamma, fit.beta

    fused = fusion.stitch_and_fuse(
        mesh, frame, camera,
        delta_edge=state.config.thresholds.edge_length,
        delta_sn=state.config.thresholds.grazing)
    record.faces_added += fused.num_faces - mesh.num_faces
    return fused


def run_generation_stage(state: SceneState, schedule: PoseSchedule,
                         session: backends.BackendSession) -> SceneState:
    """Grow the scene along the predefined trajectories."""
    thresholds = state.config.thresholds
    for index, (camera, prompt) in enumerate(schedule.entries):
        backed = planner.backoff_camera(
            state.mesh, camera, step=thresholds.backoff_step,
            depth_threshold=thresholds.backoff_depth,
            max_steps=thresholds.backoff_max_steps)
        record = IterationRecord(stage="generation", index=index,
                                 eye=list(camera.pose.center), prompt=prompt,
                                 forward=list(camera.pose.forward))
        if backed is None:
            record.skipped = "backoff rejected the pose"
            log.info("generation %d: %s", index, record.skipped)
            _log_record(state, record)
            continue
        camera, record.backoff_steps = backed
        record.eye = list(camera.pose.center)

        frame = render(state.mesh, camera)
        record.unobserved = int(frame.mask.sum())
        try:
            state.mesh = _fuse_frame(state, state.mesh, frame, camera, session,
                                     prompt, record)
        except backends.BackendError as err:
            record.skipped = f"backend error: {err}"
            log.error("generation %d aborted atomically: %s", index, err)
            _log_record(state, record)
            if state.halt_on_backend_error(session):
                raise
            continue
        record.vertices_total = state.mesh.num_vertices
        record.faces_total = state.mesh.num_faces
        _log_record(state, record)
        _snapshot(state, record, frame)
    return state


def _widen_mask(frame: FrameBundle, fuse_mask: np.ndarray) -> FrameBundle:
    """Frame with the unobserved mask grown to fuse_mask (depth dropped to
    no-hit underneath, so the frame invariant holds)."""
    return FrameBundle(rgb=frame.rgb,
                       depth=np.where(fuse_mask, NO_HIT, frame.depth),
                       mask=fuse_mask)


def run_completion_stage(state: SceneState,
                         session: backends.BackendSession) -> SceneState:
    """Sample poses at remaining holes and fill them, in rounds, until the
    sampler comes back empty or the round budget runs out."""
    cfg = state.config
    completion = cfg.completion
    prompt = completion.prompt if completion.prompt is not None else cfg.scene_prompt

    for round_idx in range(completion.rounds):
        if state.mesh.num_vertices == 0:
            break
        poses = planner.sample_completion_poses(state.mesh, planner.CompletionConfig(
            cell_edge=completion.cell_edge,
            candidates_per_cell=completion.candidates_per_cell,
            near_threshold=completion.near_threshold,
            pitch_range_deg=completion.pitch_range_deg,
            yaw_range_deg=completion.yaw_range_deg,
            seed=cfg.seed + round_idx,
            width=cfg.frame.width, height=cfg.frame.height,
            fov_deg=cfg.frame.fov_deg))
        if not poses:
            break
        for pose_idx, camera in enumerate(poses):
            index = round_idx * 10000 + pose_idx
            record = IterationRecord(stage="completion", index=index,
                                     eye=list(camera.pose.center), prompt=prompt,
                                     forward=list(camera.pose.forward))
            frame = render(state.mesh, camera)
            record.unobserved = int(frame.mask.sum())
            if not frame.mask.any():
                record.skipped = "no unobserved pixels at execution time"
                _log_record(state, record)
                continue

            cleaned_rgb, dilated, small = imaging.clean_inpaint_mask(frame)
            try:
                mesh = fusion.remove_faces_in_region(
                    state.mesh, camera, dilated, frame.depth,
                    eps_depth=cfg.thresholds.removal_depth_eps)
                record.faces_removed = state.mesh.num_faces - mesh.num_faces

                widened = _widen_mask(
                    FrameBundle(rgb=cleaned_rgb, depth=frame.depth, mask=frame.mask),
                    dilated | small)
                mesh = _fuse_frame(state, mesh, widened, camera, session,
                                   prompt, record, inpaint_mask=dilated)
            except backends.BackendError as err:
                record.skipped = f"backend error: {err}"
                log.error("completion %d aborted atomically: %s", index, err)
                _log_record(state, record)
                if state.halt_on_backend_error(session):
                    raise
                continue
            state.mesh = mesh
            record.vertices_total = state.mesh.num_vertices
            record.faces_total = state.mesh.num_faces
            _log_record(state, record)
            _snapshot(state, record, widened)
    return state


def finalize_and_export(state: SceneState, out_dir,
                        invoke_poisson: bool = False,
                        poisson_cmd: str | None = None) -> dict[str, Path]:
    """Write scene.ply and scene.obj; optionally shell out to an external
    surface-reconstruction command ("{input}" / "{output}" placeholders)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    artifacts: dict[str, Path] = {}
    for fmt in ("ply", "obj"):
        path = out / f"scene.{fmt}"
        meshio.save_mesh(state.mesh, path)
        artifacts[fmt] = path

    if invoke_poisson:
        if not poisson_cmd:
            log.warning("surface reconstruction requested but no command "
                        "configured; exported the raw mesh only")
        else:
            target = out / "scene_poisson.ply"
            cmd = [part.format(input=str(artifacts["ply"]), output=str(target))
                   for part in shlex.split(poisson_cmd)]
            try:
                subprocess.run(cmd, check=True, capture_output=True)
                artifacts["poisson"] = target
            except (OSError, subprocess.CalledProcessError) as err:
                log.warning("surface reconstruction tool failed (%s); "
                            "exported the raw mesh only", err)
    return artifacts


# -- coverage evaluation ------------------------------------------------------

def evaluation_poses(width: int = 128, height: int = 128, fov_deg: float = 75.0,
                     center=(0.0, 1.4, 0.0), radius: float = 0.5) -> list[Camera]:
    """16 fixed held-out poses: 8 level views around the ring, 4 downward,
    4 upward. Used to measure unobserved coverage, never for generation."""
    center = np.asarray(center, dtype=np.float64)
    cams = []

    def add(yaw_deg, pitch_deg):
        fwd = planner.yaw_pitch_forward(np.radians(yaw_deg), np.radians(pitch_deg))
        eye = center - radius * np.array([fwd[0], 0.0, fwd[2]])
        cams.append(camera_from_fov(width, height, fov_deg,
                                    look_at(eye, eye + fwd, planner.WORLD_UP)))

    for k in range(8):
        add(45.0 * k, 0.0)
    for k in range(4):
        add(90.0 * k + 22.5, -40.0)
    for k in range(4):
        add(90.0 * k + 67.5, 40.0)
    return cams


def unobserved_fraction(mesh: TriangleMesh, cameras: list[Camera]) -> float:
    """Mean fraction of unobserved pixels over the given cameras."""
    if not cameras:
        return 0.0
    return float(np.mean([render(mesh, cam).mask.mean() for cam in cameras]))
