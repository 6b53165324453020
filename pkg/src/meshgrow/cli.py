"""Command-line entry point.

Subcommands: `generate` (both stages from a config), `complete` (completion
stage on an existing mesh), `render` (one view of a mesh to PNG).

Exit codes: 0 success, 2 configuration error, 3 backend error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys

import numpy as np

from . import backends, imaging, meshio, pipeline, planner
from .config import ConfigError, PipelineConfig, load_config
from .geometry import GeometryError, Pose, camera_from_fov, look_at
from .oracle import BoxRoom
from .rasterizer import render

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BACKEND = 3
EXIT_IO = 4

log = logging.getLogger("meshgrow")


def _build_session(cfg: PipelineConfig, args) -> backends.BackendSession:
    if args.backend == "oracle":
        room = BoxRoom(extents=cfg.oracle.room_extents,
                       texture_seed=cfg.oracle.texture_seed)
        return backends.BackendSession(mode="oracle", oracle=room,
                                       depth_scale=cfg.oracle.depth_scale,
                                       seed=cfg.seed)
    if not args.endpoint:
        raise ConfigError("--backend remote requires --endpoint")
    return backends.BackendSession(mode="remote", endpoint=args.endpoint,
                                   seed=cfg.seed)


def _load_run_config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.snapshots:
        cfg.snapshots = True
    return cfg


def _cmd_generate(args) -> int:
    cfg = _load_run_config(args)
    session = _build_session(cfg, args)
    state = pipeline.SceneState(config=cfg)
    state.out_dir = _prepare_out(args.out)

    schedule = planner.build_generation_schedule(
        cfg.generation_trajectories(), cfg.frame.width, cfg.frame.height,
        cfg.frame.fov_deg)
    log.info("generation stage: %d poses", len(schedule))
    pipeline.run_generation_stage(state, schedule, session)

    if not args.skip_completion:
        log.info("completion stage: up to %d rounds", cfg.completion.rounds)
        pipeline.run_completion_stage(state, session)

    artifacts = pipeline.finalize_and_export(
        state, args.out, invoke_poisson=bool(args.poisson_cmd),
        poisson_cmd=args.poisson_cmd)
    log.info("exported %s", ", ".join(str(p) for p in artifacts.values()))
    return EXIT_OK


def _cmd_complete(args) -> int:
    cfg = _load_run_config(args)
    session = _build_session(cfg, args)
    state = pipeline.SceneState(config=cfg, mesh=meshio.load_mesh(args.mesh))
    state.out_dir = _prepare_out(args.out)

    pipeline.run_completion_stage(state, session)
    artifacts = pipeline.finalize_and_export(
        state, args.out, invoke_poisson=bool(args.poisson_cmd),
        poisson_cmd=args.poisson_cmd)
    log.info("exported %s", ", ".join(str(p) for p in artifacts.values()))
    return EXIT_OK


def _parse_pose(text: str) -> Pose:
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 6:
        raise ConfigError("--pose wants 'x,y,z,yaw_deg,pitch_deg,roll_deg'")
    x, y, z, yaw, pitch, roll = parts
    eye = np.array([x, y, z])
    fwd = planner.yaw_pitch_forward(math.radians(yaw), math.radians(pitch))
    pose = look_at(eye, eye + fwd, planner.WORLD_UP)
    if roll:
        c, s = math.cos(math.radians(roll)), math.sin(math.radians(roll))
        roll_rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        pose = Pose(roll_rot @ pose.rotation, roll_rot @ pose.translation)
    return pose


def _cmd_render(args) -> int:
    mesh = meshio.load_mesh(args.mesh)
    camera = camera_from_fov(args.width, args.height, args.fov, _parse_pose(args.pose))
    frame = render(mesh, camera)
    imaging.save_rgb_png(frame.rgb, args.out)
    log.info("wrote %s (%.1f%% unobserved)", args.out, 100.0 * frame.mask.mean())
    return EXIT_OK


def _prepare_out(out):
    from pathlib import Path

    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    run_log = path / "run_log.jsonl"
    if run_log.exists():
        run_log.unlink()
    return path


def _add_run_options(sub):
    sub.add_argument("--config", help="YAML run configuration")
    sub.add_argument("--backend", choices=["oracle", "remote"], default="oracle")
    sub.add_argument("--endpoint", help="remote backend base URL")
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--out", required=True, help="output directory")
    sub.add_argument("--snapshots", action="store_true")
    sub.add_argument("--poisson-cmd",
                     help="external reconstruction command with {input}/{output}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="meshgrow",
        description="Grow a textured indoor-scene mesh by iterative "
                    "render-inpaint-fuse, then export PLY/OBJ.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="run both stages from scratch")
    _add_run_options(gen)
    gen.add_argument("--skip-completion", action="store_true")
    gen.set_defaults(func=_cmd_generate)

    comp = sub.add_parser("complete", help="run the completion stage on a mesh")
    _add_run_options(comp)
    comp.add_argument("--mesh", required=True, help="input scene mesh (.ply/.obj)")
    comp.set_defaults(func=_cmd_complete)

    ren = sub.add_parser("render", help="render one view of a mesh to PNG")
    ren.add_argument("--mesh", required=True)
    ren.add_argument("--pose", required=True,
                     help="x,y,z,yaw_deg,pitch_deg,roll_deg")
    ren.add_argument("--out", required=True, help="output PNG path")
    ren.add_argument("--width", type=int, default=512)
    ren.add_argument("--height", type=int, default=512)
    ren.add_argument("--fov", type=float, default=75.0)
    ren.set_defaults(func=_cmd_render)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        log.error("configuration error: %s", err)
        return EXIT_CONFIG
    except backends.BackendError as err:
        log.error("backend error: %s", err)
        return EXIT_BACKEND
    except GeometryError as err:
        log.error("invalid input: %s", err)
        return EXIT_CONFIG
    except OSError as err:
        log.error("I/O error: %s", err)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
