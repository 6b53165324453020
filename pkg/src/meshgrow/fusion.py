"""Lifting inpainted frames into mesh patches and fusing them into the scene.

A patch is built by backprojecting unobserved pixels at the aligned depth
and mask-boundary (seam) pixels at the rendered depth, triangulating the
pixel grid, and dropping stretched faces before concatenation: faces with
an over-long world-space edge, and faces seen at a grazing angle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import imaging
from .geometry import Camera, FrameBundle, GeometryError, TriangleMesh, merge_meshes
from .rasterizer import render_with_provenance

EDGE_THRESHOLD = 0.1
GRAZING_THRESHOLD = 0.1
REMOVAL_DEPTH_EPS = 0.05
MIN_FACE_AREA = 1e-12


@dataclass
class MeshPatch:
    """Candidate geometry lifted from one frame, before filtering."""

    vertices: np.ndarray       # (N, 3) world
    colors: np.ndarray         # (N, 3)
    faces: np.ndarray          # (F, 3) int64
    source_pixels: np.ndarray  # (N, 2) int64, (u, v)
    seam: np.ndarray           # (N,) bool, True = placed on existing surface

    @property
    def num_faces(self) -> int:
        return len(self.faces)


def backproject(depth: np.ndarray, camera: Camera, pixels: np.ndarray) -> np.ndarray:
    """World points for integer pixels (u, v): inverse intrinsics at the
    pixel's depth, then the inverse rigid pose."""
    pixels = np.asarray(pixels, dtype=np.int64).reshape(-1, 2)
    d = np.asarray(depth, dtype=np.float64)[pixels[:, 1], pixels[:, 0]]
    if not np.isfinite(d).all() or (d <= 0).any():
        raise GeometryError("backprojection requested at a no-hit pixel")
    cam_pts = np.stack([
        (pixels[:, 0] - camera.cx) / camera.fx * d,
        (pixels[:, 1] - camera.cy) / camera.fy * d,
        d,
    ], axis=1)
    return camera.pose.inverse().transform(cam_pts)


def triangulate_grid(participating: np.ndarray) -> np.ndarray:
    """Two faces per 2x2 block of participating pixels.

    Returns (F, 3) row-major pixel indices; the quad at (u, v) splits into
    {(u,v), (u+1,v), (u,v+1)} and {(u+1,v), (u+1,v+1), (u,v+1)}.
    """
    p = np.asarray(participating, dtype=bool)
    h, w = p.shape
    quad = p[:-1, :-1] & p[:-1, 1:] & p[1:, :-1] & p[1:, 1:]
    vs, us = np.nonzero(quad)
    base = vs * w + us
    upper = np.stack([base, base + 1, base + w], axis=1)
    lower = np.stack([base + 1, base + w + 1, base + w], axis=1)
    return np.stack([upper, lower], axis=1).reshape(-1, 3).astype(np.int64)


def _edge_lengths(patch: MeshPatch) -> np.ndarray:
    v = patch.vertices
    a, b, c = v[patch.faces[:, 0]], v[patch.faces[:, 1]], v[patch.faces[:, 2]]
    return np.stack([np.linalg.norm(b - a, axis=1),
                     np.linalg.norm(c - b, axis=1),
                     np.linalg.norm(a - c, axis=1)], axis=1)


def _with_faces(patch: MeshPatch, keep: np.ndarray) -> MeshPatch:
    return MeshPatch(patch.vertices, patch.colors, patch.faces[keep],
                     patch.source_pixels, patch.seam)


def filter_edge_length(patch: MeshPatch, delta_edge: float = EDGE_THRESHOLD) -> MeshPatch:
    """Drop faces with any world-space edge longer than delta_edge."""
    if not patch.num_faces:
        return patch
    return _with_faces(patch, (_edge_lengths(patch) <= delta_edge).all(axis=1))


def filter_grazing(patch: MeshPatch, camera: Camera,
                   delta_sn: float = GRAZING_THRESHOLD) -> MeshPatch:
    """Keep faces with |normal . view| > delta_sn.

    The view direction runs from the camera center to the backprojection of
    the face's mean source pixel at the face's mean camera-space depth.
    Zero-area faces are dropped unconditionally.
    """
    if not patch.num_faces:
        return patch
    v = patch.vertices
    f = patch.faces
    a, b, c = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
    normal = np.cross(b - a, c - a)
    norm_len = np.linalg.norm(normal, axis=1)
    nondegenerate = 0.5 * norm_len > MIN_FACE_AREA

    cam_z = camera.pose.transform(v)[:, 2]
    mean_depth = cam_z[f].mean(axis=1)
    mean_px = patch.source_pixels[f].mean(axis=1)  # (F, 2) float

    cam_pts = np.stack([
        (mean_px[:, 0] - camera.cx) / camera.fx * mean_depth,
        (mean_px[:, 1] - camera.cy) / camera.fy * mean_depth,
        mean_depth,
    ], axis=1)
    world_pts = camera.pose.inverse().transform(cam_pts)
    view = world_pts - camera.pose.center
    view_len = np.linalg.norm(view, axis=1)

    denom = np.where(nondegenerate, norm_len, 1.0) * np.where(view_len > 0, view_len, 1.0)
    cos = np.abs((normal * view).sum(axis=1)) / denom
    return _with_faces(patch, nondegenerate & (cos > delta_sn))


def _prune_orphans(patch: MeshPatch) -> MeshPatch:
    used = np.unique(patch.faces)
    remap = np.full(len(patch.vertices), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return MeshPatch(patch.vertices[used], patch.colors[used], remap[patch.faces],
                     patch.source_pixels[used], patch.seam[used])


def build_patch(frame: FrameBundle, camera: Camera) -> MeshPatch:
    """Unfiltered patch for a frame: new vertices at unobserved pixels
    (aligned depth, inpainted color), seam vertices on the one-pixel ring
    of observed pixels around the mask (rendered depth)."""
    if frame.inpainted_rgb is None or frame.aligned_depth is None:
        raise GeometryError("frame is missing inpainted rgb or aligned depth")
    mask = frame.mask
    h, w = mask.shape
    ring = ~mask & imaging.dilate(mask, 3)
    participating = mask | ring

    flat = np.flatnonzero(participating.ravel())
    lut = np.full(h * w, -1, dtype=np.int64)
    lut[flat] = np.arange(len(flat))

    vs, us = np.unravel_index(flat, (h, w))
    pixels = np.stack([us, vs], axis=1).astype(np.int64)
    seam = ring.ravel()[flat]

    depth_src = np.where(mask, frame.aligned_depth, frame.depth)
    verts = backproject(depth_src, camera, pixels)
    colors = np.clip(frame.inpainted_rgb[vs, us], 0.0, 1.0)

    faces = lut[triangulate_grid(participating)]
    return MeshPatch(verts, colors, faces, pixels, seam)


def stitch_and_fuse(mesh: TriangleMesh, frame: FrameBundle, camera: Camera,
                    delta_edge: float = EDGE_THRESHOLD,
                    delta_sn: float = GRAZING_THRESHOLD) -> TriangleMesh:
    """Triangulate the frame's unobserved region, filter stretched faces,
    and concatenate the surviving patch onto the mesh."""
    if not frame.mask.any():
        return mesh
    patch = build_patch(frame, camera)
    patch = filter_edge_length(patch, delta_edge)
    patch = filter_grazing(patch, camera, delta_sn)
    patch = _prune_orphans(patch)
    if not patch.num_faces:
        return mesh
    return merge_meshes(mesh, TriangleMesh(patch.vertices, patch.colors, patch.faces))


def remove_faces_in_region(mesh: TriangleMesh, camera: Camera,
                           region_mask: np.ndarray, depth: np.ndarray,
                           eps_depth: float = REMOVAL_DEPTH_EPS) -> TriangleMesh:
    """Delete faces whose depth-winning pixels fall in region_mask at a
    rendered depth within eps_depth of `depth`. Vertices are kept."""
    region = np.asarray(region_mask, dtype=bool)
    if not region.any() or not mesh.num_faces:
        return mesh
    prov = render_with_provenance(mesh, camera)
    finite = np.isfinite(depth) & np.isfinite(prov.frame.depth)
    gap = np.abs(np.where(finite, prov.frame.depth, 0.0) - np.where(finite, depth, 0.0))
    hit = region & (prov.face_ids >= 0) & finite & (gap <= eps_depth)
    doomed = np.unique(prov.face_ids[hit])
    if not len(doomed):
        return mesh
    keep = np.ones(mesh.num_faces, dtype=bool)
    keep[doomed] = False
    return TriangleMesh(mesh.vertices, mesh.colors, mesh.faces[keep])
