"""Software rasterizer: z-buffered, perspective-correct, no shading.

Pixels are sampled at integer (u, v) so that rendering and backprojection
are exact inverses. Coverage ties on shared edges follow the top-left rule;
z ties go to the lower face index. Triangles are clipped against the near
plane z = NEAR_EPS (the part in front still renders, matching a per-pixel
ray-cast). No backface culling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .geometry import Camera, FrameBundle, TriangleMesh

NEAR_EPS = 1e-4


@njit(cache=True, inline="always")
def _top_left(ax, ay, bx, by):
    # Horizontal edge with interior below it, or an edge going up (y-down).
    return (ay == by and bx > ax) or (by < ay)


@njit(cache=True)
def _raster_kernel(verts, faces, colors, fx, fy, cx, cy, width, height,
                   near_eps, zbuf, rgb, fid, bary):
    poly = np.empty((4, 3))   # camera-space xyz of the clipped polygon
    pbar = np.empty((4, 3))   # barycentric coords w.r.t. the original face
    corner = np.empty((3, 3))

    for f in range(faces.shape[0]):
        for k in range(3):
            idx = faces[f, k]
            corner[k, 0] = verts[idx, 0]
            corner[k, 1] = verts[idx, 1]
            corner[k, 2] = verts[idx, 2]

        n_in = 0
        for k in range(3):
            if corner[k, 2] > near_eps:
                n_in += 1
        if n_in == 0:
            continue

        if n_in == 3:
            n_poly = 3
            for k in range(3):
                for c in range(3):
                    poly[k, c] = corner[k, c]
                    pbar[k, c] = 1.0 if k == c else 0.0
        else:
            # Sutherland-Hodgman against z = near_eps, keeping winding order.
            n_poly = 0
            for k in range(3):
                j = (k + 1) % 3
                zk = corner[k, 2]
                zj = corner[j, 2]
                if zk > near_eps:
                    for c in range(3):
                        poly[n_poly, c] = corner[k, c]
                        pbar[n_poly, c] = 1.0 if k == c else 0.0
                    n_poly += 1
                if (zk > near_eps) != (zj > near_eps):
                    s = (near_eps - zk) / (zj - zk)
                    for c in range(3):
                        poly[n_poly, c] = corner[k, c] + s * (corner[j, c] - corner[k, c])
                        bk = 1.0 if k == c else 0.0
                        bj = 1.0 if j == c else 0.0
                        pbar[n_poly, c] = bk + s * (bj - bk)
                    n_poly += 1
            if n_poly < 3:
                continue

        i0 = faces[f, 0]
        i1 = faces[f, 1]
        i2 = faces[f, 2]

        for t in range(n_poly - 2):
            a0 = 0
            a1 = t + 1
            a2 = t + 2
            z0 = poly[a0, 2]
            z1 = poly[a1, 2]
            z2 = poly[a2, 2]
            u0 = fx * poly[a0, 0] / z0 + cx
            v0 = fy * poly[a0, 1] / z0 + cy
            u1 = fx * poly[a1, 0] / z1 + cx
            v1 = fy * poly[a1, 1] / z1 + cy
            u2 = fx * poly[a2, 0] / z2 + cx
            v2 = fy * poly[a2, 1] / z2 + cy

            area2 = (u1 - u0) * (v2 - v0) - (v1 - v0) * (u2 - u0)
            if area2 == 0.0:
                continue
            s = 1.0 if area2 > 0.0 else -1.0
            inv_area = 1.0 / (s * area2)

            umin = max(0, int(np.ceil(min(u0, min(u1, u2)))))
            umax = min(width - 1, int(np.floor(max(u0, max(u1, u2)))))
            vmin = max(0, int(np.ceil(min(v0, min(v1, v2)))))
            vmax = min(height - 1, int(np.floor(max(v0, max(v1, v2)))))
            if umin > umax or vmin > vmax:
                continue

            # Edge k sits opposite vertex k; the top-left test follows the
            # winding normalization sign s.
            if s > 0.0:
                tl0 = _top_left(u1, v1, u2, v2)
                tl1 = _top_left(u2, v2, u0, v0)
                tl2 = _top_left(u0, v0, u1, v1)
            else:
                tl0 = _top_left(u2, v2, u1, v1)
                tl1 = _top_left(u0, v0, u2, v2)
                tl2 = _top_left(u1, v1, u0, v0)

            for py in range(vmin, vmax + 1):
                pyf = float(py)
                for px in range(umin, umax + 1):
                    pxf = float(px)
                    e0 = s * ((u2 - u1) * (pyf - v1) - (v2 - v1) * (pxf - u1))
                    if e0 < 0.0 or (e0 == 0.0 and not tl0):
                        continue
                    e1 = s * ((u0 - u2) * (pyf - v2) - (v0 - v2) * (pxf - u2))
                    if e1 < 0.0 or (e1 == 0.0 and not tl1):
                        continue
                    e2 = s * ((u1 - u0) * (pyf - v0) - (v1 - v0) * (pxf - u0))
                    if e2 < 0.0 or (e2 == 0.0 and not tl2):
                        continue

                    l0 = e0 * inv_area
                    l1 = e1 * inv_area
                    l2 = e2 * inv_area
                    zinv = l0 / z0 + l1 / z1 + l2 / z2
                    z = 1.0 / zinv
                    if z < zbuf[py, px]:
                        zbuf[py, px] = z
                        b0 = (l0 / z0) * z
                        b1 = (l1 / z1) * z
                        b2 = (l2 / z2) * z
                        # Barycentrics w.r.t. the original (unclipped) face.
                        w0 = b0 * pbar[a0, 0] + b1 * pbar[a1, 0] + b2 * pbar[a2, 0]
                        w1 = b0 * pbar[a0, 1] + b1 * pbar[a1, 1] + b2 * pbar[a2, 1]
                        w2 = b0 * pbar[a0, 2] + b1 * pbar[a1, 2] + b2 * pbar[a2, 2]
                        for c in range(3):
                            val = (w0 * colors[i0, c] + w1 * colors[i1, c]
                                   + w2 * colors[i2, c])
                            rgb[py, px, c] = min(1.0, max(0.0, val))
                        fid[py, px] = f
                        bary[py, px, 0] = w0
                        bary[py, px, 1] = w1
                        bary[py, px, 2] = w2


@dataclass
class ProvenanceRender:
    """Render plus, per pixel, the depth-winning face id (-1 where no hit)
    and the perspective-correct barycentric weights of the surface point."""

    frame: FrameBundle
    face_ids: np.ndarray      # (H, W) int32
    barycentrics: np.ndarray  # (H, W, 3) float64


def _rasterize(mesh: TriangleMesh, camera: Camera):
    h, w = camera.height, camera.width
    zbuf = np.full((h, w), np.inf)
    rgb = np.zeros((h, w, 3))
    fid = np.full((h, w), -1, dtype=np.int32)
    bary = np.zeros((h, w, 3))
    if mesh.num_faces:
        verts_cam = camera.pose.transform(mesh.vertices)
        _raster_kernel(verts_cam, mesh.faces, mesh.colors,
                       camera.fx, camera.fy, camera.cx, camera.cy,
                       camera.width, camera.height, NEAR_EPS,
                       zbuf, rgb, fid, bary)
    frame = FrameBundle(rgb=rgb, depth=zbuf, mask=~np.isfinite(zbuf))
    return frame, fid, bary


def render(mesh: TriangleMesh, camera: Camera) -> FrameBundle:
    """Rasterize the mesh into RGB, depth and unobserved-mask rasters."""
    frame, _, _ = _rasterize(mesh, camera)
    return frame


def render_with_provenance(mesh: TriangleMesh, camera: Camera) -> ProvenanceRender:
    frame, fid, bary = _rasterize(mesh, camera)
    return ProvenanceRender(frame=frame, face_ids=fid, barycentrics=bary)
