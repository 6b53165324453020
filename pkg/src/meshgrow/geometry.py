"""Core scene types: triangle mesh, rigid poses, cameras, frame bundles.

Conventions (fixed across the whole package):
  - Pose maps world -> camera: p_cam = R @ p_world + t.
  - Camera looks along its +z axis; image v grows with camera-space y.
  - Depth rasters hold camera-space z; unobserved pixels carry NO_HIT (inf).
  - Mesh colors are per-vertex RGB in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Reserved raster value for pixels no triangle covers. Never exported.
NO_HIT = np.inf

ROTATION_TOL = 1e-6


class GeometryError(ValueError):
    """Degenerate geometric input (bad look-at, invalid mesh or camera)."""


def _as_readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Pose:
    """Rigid world-to-camera transform."""

    rotation: np.ndarray     # (3, 3)
    translation: np.ndarray  # (3,)

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not (np.isfinite(r).all() and np.isfinite(t).all()):
            raise GeometryError("pose contains non-finite values")
        if np.abs(r @ r.T - np.eye(3)).max() > ROTATION_TOL:
            raise GeometryError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > ROTATION_TOL:
            raise GeometryError("rotation determinant is not +1")
        object.__setattr__(self, "rotation", _as_readonly(r))
        object.__setattr__(self, "translation", _as_readonly(t))

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    def transform(self, points: np.ndarray) -> np.ndarray:
        """Map world-space points (..., 3) into camera space."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def inverse(self) -> "Pose":
        return Pose(self.rotation.T, -self.rotation.T @ self.translation)

    def compose(self, other: "Pose") -> "Pose":
        """Transform applying `other` first, then self."""
        return Pose(self.rotation @ other.rotation,
                    self.rotation @ other.translation + self.translation)

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rotation.T @ self.translation

    @property
    def forward(self) -> np.ndarray:
        """Camera +z (look-at) axis expressed in world coordinates."""
        return self.rotation[2].copy()


def look_at(eye, target, up) -> Pose:
    """World-to-camera pose placed at `eye` with +z pointing at `target`.

    look_at((0,0,0), (0,0,1), (0,1,0)) is the identity pose; the up
    vector maps to the camera +y axis.
    """
    eye = np.asarray(eye, dtype=np.float64).reshape(3)
    target = np.asarray(target, dtype=np.float64).reshape(3)
    up = np.asarray(up, dtype=np.float64).reshape(3)

    fwd = target - eye
    norm = np.linalg.norm(fwd)
    if norm < 1e-12:
        raise GeometryError("look_at: eye and target coincide")
    z = fwd / norm

    x = np.cross(up, z)
    xnorm = np.linalg.norm(x)
    if xnorm < 1e-9:
        raise GeometryError("look_at: up vector is parallel to the view direction")
    x = x / xnorm
    y = np.cross(z, x)

    rot = np.stack([x, y, z])
    return Pose(rot, -rot @ eye)


@dataclass(frozen=True)
class Camera:
    """Pinhole camera: intrinsics (pixels), image size, world-to-camera pose.

    Projection of a camera-space point (x, y, z): u = fx*x/z + cx,
    v = fy*y/z + cy. Pixels are sampled at integer (u, v).
    """

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    pose: Pose

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise GeometryError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise GeometryError("principal point must lie inside the image")

    @property
    def intrinsics(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    def with_pose(self, pose: Pose) -> "Camera":
        return Camera(self.fx, self.fy, self.cx, self.cy,
                      self.width, self.height, pose)

    def pixel_rays(self) -> np.ndarray:
        """Camera-space ray directions (H, W, 3) with z = 1 for every pixel."""
        u = np.arange(self.width, dtype=np.float64)
        v = np.arange(self.height, dtype=np.float64)
        uu, vv = np.meshgrid(u, v)
        return np.stack([(uu - self.cx) / self.fx,
                         (vv - self.cy) / self.fy,
                         np.ones_like(uu)], axis=-1)


def camera_from_fov(width: int, height: int, fov_deg: float, pose: Pose) -> Camera:
    """Square-pixel camera whose horizontal field of view is `fov_deg`."""
    f = (width / 2.0) / np.tan(np.radians(fov_deg) / 2.0)
    return Camera(f, f, width / 2.0, height / 2.0, width, height, pose)


@dataclass(frozen=True)
class TriangleMesh:
    """Vertex-colored triangle soup grown by the pipeline.

    Immutable once constructed: all arrays are read-only, every operation
    returns a new mesh. Safe to share across threads.
    """

    vertices: np.ndarray  # (N, 3) float64
    colors: np.ndarray    # (N, 3) float64 in [0, 1]
    faces: np.ndarray     # (M, 3) int64

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        c = np.asarray(self.colors, dtype=np.float64).reshape(-1, 3)
        f = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)

        if len(c) != len(v):
            raise GeometryError("colors count must equal vertex count")
        if not np.isfinite(v).all():
            raise GeometryError("vertices contain NaN/Inf")
        if len(c) and (c.min() < 0.0 or c.max() > 1.0 or not np.isfinite(c).all()):
            raise GeometryError("colors must be finite and in [0, 1]")
        if len(f):
            if f.min() < 0 or f.max() >= len(v):
                raise GeometryError("face index out of range")
            if ((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])).any():
                raise GeometryError("face repeats a vertex index")

        object.__setattr__(self, "vertices", _as_readonly(v))
        object.__setattr__(self, "colors", _as_readonly(c))
        object.__setattr__(self, "faces", _as_readonly(f))

    @staticmethod
    def empty() -> "TriangleMesh":
        return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3)),
                            np.zeros((0, 3), dtype=np.int64))

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    def face_areas(self) -> np.ndarray:
        a = self.vertices[self.faces[:, 0]]
        b = self.vertices[self.faces[:, 1]]
        c = self.vertices[self.faces[:, 2]]
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def merge_meshes(base: TriangleMesh, patch: TriangleMesh) -> TriangleMesh:
    """Concatenate two meshes; patch face indices are offset past base."""
    if base.num_vertices == 0 and base.num_faces == 0:
        return patch
    if patch.num_vertices == 0 and patch.num_faces == 0:
        return base
    return TriangleMesh(
        np.vstack([base.vertices, patch.vertices]),
        np.vstack([base.colors, patch.colors]),
        np.vstack([base.faces, patch.faces + base.num_vertices]),
    )


@dataclass
class FrameBundle:
    """One rendered view: RGB, z-depth and unobserved mask, plus the
    inpainted rasters once the backends have run."""

    rgb: np.ndarray    # (H, W, 3) float64 in [0, 1]
    depth: np.ndarray  # (H, W) float64, NO_HIT where nothing was hit
    mask: np.ndarray   # (H, W) bool, True = unobserved
    inpainted_rgb: np.ndarray | None = None
    aligned_depth: np.ndarray | None = None

    def __post_init__(self):
        self.rgb = np.asarray(self.rgb, dtype=np.float64)
        self.depth = np.asarray(self.depth, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.rgb.shape[:2] != self.depth.shape or self.depth.shape != self.mask.shape:
            raise GeometryError("frame rasters disagree on image size")
        if bool((self.mask != ~np.isfinite(self.depth)).any()):
            raise GeometryError("mask must flag exactly the no-hit depth pixels")
        if not np.isfinite(self.rgb).all() or self.rgb.min() < 0 or self.rgb.max() > 1:
            raise GeometryError("rgb must be finite and in [0, 1]")

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def width(self) -> int:
        return self.depth.shape[1]
