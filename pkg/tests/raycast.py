"""Independent per-pixel ray-cast reference for rasterizer checks.

Pure numpy Moller-Trumbore over every (pixel, face) pair. Deliberately
shares no code with the production rasterizer: rays are intersected in
world space and the smallest parameter t past the near plane wins, which
equals camera-space z because the ray directions have unit camera z.
"""

import numpy as np


def raycast_depth(mesh, camera, near_eps=1e-4):
    dirs = camera.pixel_rays() @ camera.pose.rotation  # world, cam z == 1
    origin = camera.pose.center
    h, w = camera.height, camera.width
    d = dirs.reshape(-1, 3)
    t_best = np.full(h * w, np.inf)

    v0 = mesh.vertices[mesh.faces[:, 0]]
    v1 = mesh.vertices[mesh.faces[:, 1]]
    v2 = mesh.vertices[mesh.faces[:, 2]]

    for f in range(len(mesh.faces)):
        e1 = v1[f] - v0[f]
        e2 = v2[f] - v0[f]
        pvec = np.cross(d, e2)
        det = pvec @ e1
        ok = np.abs(det) > 1e-14
        inv_det = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        tvec = origin - v0[f]
        u = (pvec @ tvec) * inv_det
        qvec = np.cross(tvec, e1)
        v = (d @ qvec) * inv_det
        t = (e2 @ qvec) * inv_det
        hit = ok & (u >= 0.0) & (v >= 0.0) & (u + v <= 1.0) & (t > near_eps)
        t_best = np.where(hit & (t < t_best), t, t_best)
    return t_best.reshape(h, w)
