"""Deterministic procedural scene: an axis-aligned textured box room with a
few furniture boxes. Provides exact ray-cast depth and colors, a reference
triangle mesh, and point-to-surface distances, so pipeline geometry can be
checked against closed-form ground truth.

World frame: y is up. The room spans x in [-w/2, w/2], y in [0, h],
z in [-d/2, d/2].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Camera, GeometryError, TriangleMesh

_PARALLEL_EPS = 1e-12
_CHECKER_SIZE = 0.5


@dataclass(frozen=True)
class AxisBox:
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    def arrays(self):
        return np.asarray(self.lo, dtype=np.float64), np.asarray(self.hi, dtype=np.float64)


DEFAULT_ROOM_EXTENTS = (6.0, 3.0, 4.0)
DEFAULT_FURNITURE = (
    AxisBox((-2.4, 0.0, -1.5), (-1.4, 0.9, -0.6)),
    AxisBox((1.3, 0.0, 0.4), (2.3, 0.7, 1.4)),
)


@dataclass
class BoxRoom:
    extents: tuple[float, float, float] = DEFAULT_ROOM_EXTENTS
    texture_seed: int = 0
    furniture: tuple[AxisBox, ...] = DEFAULT_FURNITURE
    _palette: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        w, h, d = self.extents
        if min(w, h, d) <= 0:
            raise GeometryError("room extents must be positive")
        rng = np.random.default_rng(self.texture_seed)
        # Two checker colors per face of every box (room is box 0).
        self._palette = rng.uniform(0.2, 0.85,
                                    size=(1 + len(self.furniture), 3, 2, 2, 3))

    @property
    def room_box(self) -> AxisBox:
        w, h, d = self.extents
        return AxisBox((-w / 2.0, 0.0, -d / 2.0), (w / 2.0, h, d / 2.0))

    def _boxes(self):
        return [self.room_box, *self.furniture]

    # -- ray casting ---------------------------------------------------------

    def _cast(self, camera: Camera):
        """Nearest-hit t (camera z-depth), box id, face axis and face side
        for every pixel ray of the camera."""
        dirs = camera.pixel_rays() @ camera.pose.rotation  # world, cam-z == 1
        origin = camera.pose.center

        t_best = np.full(dirs.shape[:2], np.inf)
        box_best = np.full(dirs.shape[:2], -1, dtype=np.int32)
        axis_best = np.zeros(dirs.shape[:2], dtype=np.int32)
        side_best = np.zeros(dirs.shape[:2], dtype=np.int32)

        def commit(t, hit, box_id, axis, side):
            nonlocal t_best
            closer = hit & (t < t_best)
            t_best = np.where(closer, t, t_best)
            box_best[closer] = box_id
            axis_best[closer] = axis if np.isscalar(axis) else axis[closer]
            side_best[closer] = side if np.isscalar(side) else side[closer]

        # Room: the camera is inside, so the hit is the slab exit per axis.
        lo, hi = self.room_box.arrays()
        for axis in range(3):
            d = dirs[..., axis]
            safe = np.where(np.abs(d) < _PARALLEL_EPS, _PARALLEL_EPS, d)
            t_exit = np.where(d > 0, (hi[axis] - origin[axis]) / safe,
                              (lo[axis] - origin[axis]) / safe)
            t_exit = np.where(np.abs(d) < _PARALLEL_EPS, np.inf, t_exit)
            commit(t_exit, t_exit > 0, 0,
                   axis, (d > 0).astype(np.int32))

        # Furniture: slab-method entry hit, seen from outside.
        for b, abox in enumerate(self.furniture, start=1):
            blo, bhi = abox.arrays()
            t_near = np.full(dirs.shape[:2], -np.inf)
            t_far = np.full(dirs.shape[:2], np.inf)
            near_axis = np.zeros(dirs.shape[:2], dtype=np.int32)
            for axis in range(3):
                d = dirs[..., axis]
                parallel = np.abs(d) < _PARALLEL_EPS
                safe = np.where(parallel, 1.0, d)
                t1 = (blo[axis] - origin[axis]) / safe
                t2 = (bhi[axis] - origin[axis]) / safe
                tmin, tmax = np.minimum(t1, t2), np.maximum(t1, t2)
                inside_slab = (origin[axis] >= blo[axis]) & (origin[axis] <= bhi[axis])
                tmin = np.where(parallel, np.where(inside_slab, -np.inf, np.inf), tmin)
                tmax = np.where(parallel, np.where(inside_slab, np.inf, -np.inf), tmax)
                enters_here = tmin > t_near
                near_axis = np.where(enters_here, axis, near_axis)
                t_near = np.maximum(t_near, tmin)
                t_far = np.minimum(t_far, tmax)
            hit = (t_near <= t_far) & (t_near > 0)
            d_near = np.take_along_axis(dirs, near_axis[..., None], axis=2)[..., 0]
            commit(t_near, hit, b, near_axis, (d_near < 0).astype(np.int32))

        return t_best, box_best, axis_best, side_best, dirs, origin

    def cast_depth(self, camera: Camera) -> np.ndarray:
        """Exact camera-space z-depth of the scene for every pixel."""
        t_best, _, _, _, _, _ = self._cast(camera)
        return t_best

    def shade(self, camera: Camera) -> np.ndarray:
        """Procedural texture color of the visible surface per pixel."""
        t, box_id, axis, side, dirs, origin = self._cast(camera)
        t_safe = np.where(np.isfinite(t), t, 1.0)
        point = origin + t_safe[..., None] * dirs

        a_coord = np.take_along_axis(point, ((axis + 1) % 3)[..., None], axis=2)[..., 0]
        b_coord = np.take_along_axis(point, ((axis + 2) % 3)[..., None], axis=2)[..., 0]
        checker = (np.floor(a_coord / _CHECKER_SIZE)
                   + np.floor(b_coord / _CHECKER_SIZE)).astype(np.int64) % 2

        base = self._palette[box_id, axis, side, checker]
        ramp = 0.8 + 0.2 * (np.modf(np.abs(a_coord) / 2.0)[0])
        rgb = np.clip(base * ramp[..., None], 0.0, 1.0)
        return np.where(np.isfinite(t)[..., None], rgb, 0.0)

    # -- reference geometry ---------------------------------------------------

    def mesh(self, include_furniture: bool = True) -> TriangleMesh:
        """Closed triangle mesh of the room (and furniture) boxes."""
        verts, colors, faces = [], [], []
        boxes = self._boxes() if include_furniture else [self.room_box]
        for abox in boxes:
            lo, hi = abox.arrays()
            base = len(verts)
            corners = [[lo[0], lo[1], lo[2]], [hi[0], lo[1], lo[2]],
                       [lo[0], hi[1], lo[2]], [hi[0], hi[1], lo[2]],
                       [lo[0], lo[1], hi[2]], [hi[0], lo[1], hi[2]],
                       [lo[0], hi[1], hi[2]], [hi[0], hi[1], hi[2]]]
            verts.extend(corners)
            colors.extend([[0.5, 0.5, 0.5]] * 8)
            quads = [(0, 1, 3, 2), (4, 5, 7, 6), (0, 4, 6, 2),
                     (1, 5, 7, 3), (0, 1, 5, 4), (2, 3, 7, 6)]
            for q in quads:
                faces.append([base + q[0], base + q[1], base + q[2]])
                faces.append([base + q[0], base + q[2], base + q[3]])
        return TriangleMesh(np.asarray(verts, dtype=np.float64),
                            np.asarray(colors, dtype=np.float64),
                            np.asarray(faces, dtype=np.int64))

    def surface_distance(self, points: np.ndarray) -> np.ndarray:
        """Distance from each point to the nearest scene surface (room walls
        or any furniture face)."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        best = np.full(len(pts), np.inf)
        for abox in self._boxes():
            lo, hi = abox.arrays()
            outside = np.maximum(np.maximum(lo - pts, pts - hi), 0.0)
            out_dist = np.linalg.norm(outside, axis=1)
            margin = np.minimum(pts - lo, hi - pts).min(axis=1)
            dist = np.where(out_dist > 0, out_dist, np.abs(margin))
            best = np.minimum(best, dist)
        return best
