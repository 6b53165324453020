"""Rasterizer tests against hand geometry and the ray-cast reference."""

import numpy as np
import pytest

from meshgrow.geometry import Pose, TriangleMesh, camera_from_fov, look_at, merge_meshes
from meshgrow.rasterizer import NEAR_EPS, render, render_with_provenance

from raycast import raycast_depth


def _camera(w=64, h=64, fov=75.0, pose=None):
    return camera_from_fov(w, h, fov, pose or Pose.identity())


def _quad(z=2.0, half=8.0, color=(0.3, 0.6, 0.9)):
    """Fronto-parallel quad at depth z, large enough to overscan the view."""
    verts = np.array([[-half, -half, z], [half, -half, z],
                      [-half, half, z], [half, half, z]])
    colors = np.tile(np.asarray(color), (4, 1))
    return TriangleMesh(verts, colors, np.array([[0, 1, 2], [1, 3, 2]]))


def _random_mesh(rng, max_tris=50):
    n_tris = int(rng.integers(1, max_tris + 1))
    verts = rng.uniform([-2.0, -2.0, 0.5], [2.0, 2.0, 6.0], (3 * n_tris, 3))
    colors = rng.uniform(0, 1, (3 * n_tris, 3))
    faces = np.arange(3 * n_tris).reshape(n_tris, 3)
    return TriangleMesh(verts, colors, faces)


class TestBasics:
    def test_empty_mesh_all_mask(self):
        frame = render(TriangleMesh.empty(), _camera())
        assert frame.mask.all()
        assert np.isinf(frame.depth).all()

    def test_constant_depth_plane(self):
        frame = render(_quad(z=2.0), _camera())
        assert not frame.mask.any()
        np.testing.assert_allclose(frame.depth, 2.0, atol=1e-12)
        np.testing.assert_allclose(frame.rgb,
                                   np.broadcast_to([0.3, 0.6, 0.9], frame.rgb.shape),
                                   atol=1e-12)

    def test_determinism_bit_identical(self):
        rng = np.random.default_rng(11)
        mesh = _random_mesh(rng)
        cam = _camera()
        a, b = render(mesh, cam), render(mesh, cam)
        assert np.array_equal(a.depth, b.depth)
        assert np.array_equal(a.rgb, b.rgb)
        assert np.array_equal(a.mask, b.mask)

    def test_depth_monotone_under_added_triangles(self):
        rng = np.random.default_rng(5)
        base = _random_mesh(rng, 20)
        extra = _random_mesh(rng, 20)
        cam = _camera()
        before = render(base, cam).depth
        after = render(merge_meshes(base, extra), cam).depth
        assert (after <= before + 1e-15).all()


class TestOracleAgreement:
    def test_random_meshes_match_raycast(self):
        rng = np.random.default_rng(42)
        for _ in range(5):
            mesh = _random_mesh(rng)
            cam = _camera()
            got = render(mesh, cam).depth
            want = raycast_depth(mesh, cam)
            both = np.isfinite(got) & np.isfinite(want)
            diff = np.abs(np.where(both, got, 0.0) - np.where(both, want, 0.0))
            agree = (diff < 1e-5) & ~(np.isfinite(got) ^ np.isfinite(want))
            assert agree.mean() >= 0.999

    def test_backprojected_depth_lies_on_winning_plane(self):
        rng = np.random.default_rng(3)
        mesh = _random_mesh(rng, 10)
        cam = _camera()
        prov = render_with_provenance(mesh, cam)
        covered = prov.face_ids >= 0
        vs, us = np.nonzero(covered)
        d = prov.frame.depth[vs, us]
        pts_cam = np.stack([(us - cam.cx) / cam.fx * d,
                            (vs - cam.cy) / cam.fy * d, d], axis=1)
        pts = cam.pose.inverse().transform(pts_cam)

        tri = mesh.vertices[mesh.faces[prov.face_ids[vs, us]]]
        normal = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        normal /= np.linalg.norm(normal, axis=1, keepdims=True)
        dist = np.abs(((pts - tri[:, 0]) * normal).sum(axis=1))
        assert dist.max() < 1e-5


class TestProvenance:
    def test_single_triangle_face_id(self):
        mesh = TriangleMesh(
            np.array([[-1.0, -1.0, 2.0], [1.0, -1.0, 2.0], [0.0, 1.0, 2.0]]),
            np.full((3, 3), 0.5), np.array([[0, 1, 2]]))
        cam = _camera()
        prov = render_with_provenance(mesh, cam)
        center = prov.face_ids[cam.height // 2, cam.width // 2]
        assert center == 0
        assert set(np.unique(prov.face_ids)) <= {-1, 0}

    def test_stacked_quads_near_wins(self):
        near, far = _quad(z=1.5), _quad(z=3.0)
        mesh = merge_meshes(near, far)
        prov = render_with_provenance(mesh, _camera())
        assert (prov.face_ids <= 1).all() and (prov.face_ids >= 0).all()
        np.testing.assert_allclose(prov.frame.depth, 1.5, atol=1e-12)

    def test_barycentrics_sum_and_reproject(self):
        rng = np.random.default_rng(9)
        mesh = _random_mesh(rng, 25)
        cam = _camera()
        prov = render_with_provenance(mesh, cam)
        covered = prov.face_ids >= 0
        vs, us = np.nonzero(covered)
        b = prov.barycentrics[vs, us]
        np.testing.assert_allclose(b.sum(axis=1), 1.0, atol=1e-6)

        tri = mesh.vertices[mesh.faces[prov.face_ids[vs, us]]]
        pts = (b[:, :, None] * tri).sum(axis=1)
        pts_cam = cam.pose.transform(pts)
        u = cam.fx * pts_cam[:, 0] / pts_cam[:, 2] + cam.cx
        v = cam.fy * pts_cam[:, 1] / pts_cam[:, 2] + cam.cy
        assert np.abs(u - us).max() < 0.5
        assert np.abs(v - vs).max() < 0.5


class TestNearPlane:
    def test_fully_behind_is_dropped(self):
        mesh = TriangleMesh(
            np.array([[-1.0, -1.0, -2.0], [1.0, -1.0, -2.0], [0.0, 1.0, -0.5]]),
            np.full((3, 3), 0.5), np.array([[0, 1, 2]]))
        assert render(mesh, _camera()).mask.all()

    def test_crossing_triangle_matches_raycast(self):
        # One vertex behind the camera; the front part must still render.
        mesh = TriangleMesh(
            np.array([[0.0, -0.5, -1.0], [2.0, 0.5, 4.0], [-2.0, 0.5, 4.0]]),
            np.full((3, 3), 0.5), np.array([[0, 1, 2]]))
        cam = _camera()
        got = render(mesh, cam)
        want = raycast_depth(mesh, cam, near_eps=NEAR_EPS)
        assert not got.mask.all()
        both = np.isfinite(got.depth) & np.isfinite(want)
        assert both.any()
        assert np.abs(got.depth[both] - want[both]).max() < 1e-5
        mismatch = np.isfinite(got.depth) ^ np.isfinite(want)
        assert mismatch.mean() < 0.01
