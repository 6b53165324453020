"""Disparity scale/shift fit, aligned-depth extraction, seam smoothing."""

import numpy as np
import pytest

from meshgrow.backends import BackendSession
from meshgrow.depth_align import (
    DegenerateFitError, DisparityAlignment, apply_alignment, predict_and_align,
    smooth_mask_edges, solve_scale_shift,
)
from meshgrow.geometry import FrameBundle, NO_HIT, camera_from_fov, look_at
from meshgrow.oracle import BoxRoom
from meshgrow.rasterizer import render


def _residual(gamma, beta, pred, rendered, mask):
    obs = ~mask
    x = 1.0 / np.maximum(pred[obs], 1e-4)
    y = 1.0 / np.maximum(rendered[obs], 1e-4)
    r = gamma * x + beta - y
    return float((r * r).sum())


def _instance(rng, n=120):
    """A consistent-but-noisy fit instance over a small raster."""
    rendered = rng.uniform(0.5, 6.0, (1, n))
    scale = rng.uniform(0.3, 3.0)
    shift = rng.uniform(-0.2, 0.2)
    pred_disp = (1.0 / rendered - shift) / scale
    pred_disp += rng.normal(0.0, 0.01, pred_disp.shape)
    pred = 1.0 / np.clip(pred_disp, 0.05, 1e4)
    mask = np.zeros_like(rendered, dtype=bool)
    return pred, rendered, mask


class TestSolveScaleShift:
    def test_identity_case_exact(self):
        rng = np.random.default_rng(0)
        depth = rng.uniform(0.5, 5.0, (16, 16))
        fit = solve_scale_shift(depth, depth, np.zeros((16, 16), dtype=bool))
        assert fit.gamma == pytest.approx(1.0, abs=1e-12)
        assert fit.beta == pytest.approx(0.0, abs=1e-12)

    def test_half_depth_recovers_half_gamma(self):
        # pred = rendered / 2 -> pred disparity = 2 * rendered disparity,
        # so gamma = 0.5, beta = 0; confirmed by a dense grid search.
        rng = np.random.default_rng(1)
        rendered = rng.uniform(0.5, 5.0, (8, 8))
        pred = rendered / 2.0
        mask = np.zeros((8, 8), dtype=bool)
        fit = solve_scale_shift(pred, rendered, mask)
        assert fit.gamma == pytest.approx(0.5, abs=1e-12)
        assert fit.beta == pytest.approx(0.0, abs=1e-12)

        best_grid = min(
            _residual(g, b, pred, rendered, mask)
            for g in np.linspace(0.0, 2.0, 101)
            for b in np.linspace(0.0, 2.0, 101))
        assert _residual(fit.gamma, fit.beta, pred, rendered, mask) <= best_grid + 1e-12

    def test_two_pixel_hand_case(self):
        # rendered (1, 2), predicted (2, 4): disparities x = (1/2, 1/4),
        # y = (1, 1/2); gamma = 2, beta = 0 fits exactly (residual 0).
        pred = np.array([[2.0, 4.0]])
        rendered = np.array([[1.0, 2.0]])
        mask = np.zeros((1, 2), dtype=bool)
        fit = solve_scale_shift(pred, rendered, mask)
        assert fit.gamma == pytest.approx(2.0, abs=1e-12)
        assert fit.beta == pytest.approx(0.0, abs=1e-12)

        rng = np.random.default_rng(2)
        ours = _residual(fit.gamma, fit.beta, pred, rendered, mask)
        candidates = rng.uniform(-10, 10, (10_000, 2))
        for g, b in candidates:
            assert ours <= _residual(g, b, pred, rendered, mask) + 1e-12

    def test_constant_predicted_disparity_is_degenerate(self):
        # The normal matrix is rank one when predicted disparity is constant.
        pred = np.array([[2.0, 2.0]])
        rendered = np.array([[1.0, 2.0]])
        with pytest.raises(DegenerateFitError):
            solve_scale_shift(pred, rendered, np.zeros((1, 2), dtype=bool))

    def test_too_few_observed_pixels(self):
        pred = np.array([[2.0, 3.0]])
        rendered = np.array([[1.0, 2.0]])
        mask = np.array([[False, True]])
        with pytest.raises(DegenerateFitError):
            solve_scale_shift(pred, rendered, mask)

    def test_negative_gamma_is_degenerate(self):
        # Anti-correlated prediction drives the minimizer to gamma < 0.
        rendered = np.array([[1.0, 2.0, 4.0]])
        pred = np.array([[4.0, 2.0, 1.0]])
        with pytest.raises(DegenerateFitError):
            solve_scale_shift(pred, rendered, np.zeros((1, 3), dtype=bool))

    def test_beats_random_candidates_on_fuzzed_instances(self):
        rng = np.random.default_rng(3)
        candidates = rng.uniform(-10, 10, (10_000, 2))
        for _ in range(20):
            pred, rendered, mask = _instance(rng)
            fit = solve_scale_shift(pred, rendered, mask)
            ours = _residual(fit.gamma, fit.beta, pred, rendered, mask)
            obs = ~mask
            x = 1.0 / np.maximum(pred[obs], 1e-4)
            y = 1.0 / np.maximum(rendered[obs], 1e-4)
            r = candidates[:, :1] * x[None, :] + candidates[:, 1:] - y[None, :]
            assert ours <= (r * r).sum(axis=1).min() + 1e-9

    def test_scale_gauge(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            pred, rendered, mask = _instance(rng)
            s = rng.uniform(0.2, 5.0)
            fit = solve_scale_shift(pred, rendered, mask)
            fit_scaled = solve_scale_shift(s * pred, rendered, mask)
            assert fit_scaled.gamma == pytest.approx(s * fit.gamma, rel=1e-9)
            assert fit_scaled.beta == pytest.approx(fit.beta, abs=1e-9)
            a = apply_alignment(pred, fit)
            b = apply_alignment(s * pred, fit_scaled)
            np.testing.assert_allclose(a, b, atol=1e-9)


class TestApplyAlignment:
    def test_identity(self):
        depth = np.array([[0.5, 2.0, 9.0]])
        out = apply_alignment(depth, DisparityAlignment.identity())
        np.testing.assert_allclose(out, depth, atol=1e-15)

    def test_hand_evaluation(self):
        # gamma=0.5, beta=0 on depth 2.0: 1 / (0.5 / 2.0) = 4.0
        out = apply_alignment(np.array([[2.0]]), DisparityAlignment(0.5, 0.0))
        assert out[0, 0] == pytest.approx(4.0, abs=1e-15)

    def test_large_shift_dominates(self):
        fit = DisparityAlignment(1.0, 10.0)
        for d in (2.0, 10.0, 50.0):
            out = apply_alignment(np.array([[d]]), fit)
            assert out[0, 0] == pytest.approx(1.0 / (1.0 / d + 10.0), abs=1e-15)
            assert 0.09 < out[0, 0] <= 0.1

    def test_output_clamped(self):
        # Negative disparity clamps at the far limit, huge disparity near.
        far = apply_alignment(np.array([[2.0]]), DisparityAlignment(1.0, -0.51))
        assert far[0, 0] == pytest.approx(100.0)
        near = apply_alignment(np.array([[1e-9]]), DisparityAlignment(1.0, 0.0))
        assert near[0, 0] == pytest.approx(1e-4)


class TestSmoothMaskEdges:
    def test_no_boundary_is_identity(self):
        rng = np.random.default_rng(5)
        depth = rng.uniform(1, 3, (12, 12))
        out = smooth_mask_edges(depth, np.zeros((12, 12), dtype=bool))
        assert np.array_equal(out, depth)

    def test_constant_depth_unchanged(self):
        depth = np.full((16, 16), 2.5)
        mask = np.zeros((16, 16), dtype=bool)
        mask[:, 8:] = True
        out = smooth_mask_edges(depth, mask)
        np.testing.assert_allclose(out, depth, atol=1e-12)

    def test_step_edge_blends_strictly_between(self):
        depth = np.where(np.arange(16)[None, :] < 8, 1.0, 2.0).repeat(16, axis=0)
        mask = np.zeros((16, 16), dtype=bool)
        mask[:, 8:] = True
        out = smooth_mask_edges(depth, mask)
        boundary_cols = out[4:12, 7:9]
        assert (boundary_cols > 1.0).all() and (boundary_cols < 2.0).all()
        # interior: farther than 2 px from the boundary -> untouched bits
        assert np.array_equal(out[:, :5], depth[:, :5])
        assert np.array_equal(out[:, 11:], depth[:, 11:])

    def test_locality_chebyshev_two(self):
        rng = np.random.default_rng(6)
        depth = rng.uniform(1, 4, (20, 20))
        mask = rng.random((20, 20)) < 0.3
        out = smooth_mask_edges(depth, mask)
        changed = out != depth

        # Chebyshev distance to the mask boundary via repeated 3x3 dilation.
        from meshgrow.imaging import dilate
        boundary = (mask & dilate(~mask, 3)) | (~mask & dilate(mask, 3))
        within2 = dilate(dilate(boundary, 3), 3)
        assert not (changed & ~within2).any()

    def test_direct_convolution_oracle(self):
        rng = np.random.default_rng(7)
        depth = rng.uniform(1, 4, (14, 14))
        mask = np.zeros((14, 14), dtype=bool)
        mask[5:, 3:10] = True
        out = smooth_mask_edges(depth, mask)

        r, sigma = 2, 1.0
        k1 = np.exp(-np.arange(-r, r + 1) ** 2 / (2 * sigma * sigma))
        kernel = np.outer(k1, k1)
        kernel /= kernel.sum()
        padded = np.pad(depth, r, mode="reflect")
        for y in range(14):
            for x in range(14):
                if out[y, x] != depth[y, x]:
                    want = (kernel * padded[y:y + 5, x:x + 5]).sum()
                    assert out[y, x] == pytest.approx(want, abs=1e-12)


class TestPredictAndAlign:
    def _frame_from_partial_room(self, room, camera, drop=()):
        mesh = room.mesh()
        keep = np.ones(mesh.num_faces, dtype=bool)
        keep[list(drop)] = False
        from meshgrow.geometry import TriangleMesh
        partial = TriangleMesh(mesh.vertices, mesh.colors, mesh.faces[keep])
        return render(partial, camera)

    def test_oracle_backend_reproduces_analytic_depth(self):
        room = BoxRoom()
        camera = camera_from_fov(64, 64, 75.0,
                                 look_at((0.17, 1.31, 0.23), (0.9, 1.2, 2.0), (0, 1, 0)))
        session = BackendSession(mode="oracle", oracle=room, camera=camera)
        frame = self._frame_from_partial_room(room, camera, drop=(2, 3))
        assert frame.mask.any() and (~frame.mask).any()
        aligned, fit = predict_and_align(session, frame)
        assert fit.gamma == pytest.approx(1.0, abs=1e-9)
        assert fit.beta == pytest.approx(0.0, abs=1e-9)

        analytic = room.cast_depth(camera)
        from meshgrow.imaging import dilate
        boundary = (frame.mask & dilate(~frame.mask, 3)) | \
                   (~frame.mask & dilate(frame.mask, 3))
        off_boundary = ~dilate(dilate(boundary, 3), 3)
        assert np.abs(aligned - analytic)[off_boundary].max() < 1e-6

    def test_scaled_backend_recovered(self):
        room = BoxRoom()
        camera = camera_from_fov(64, 64, 75.0,
                                 look_at((0.17, 1.31, 0.23), (0.9, 1.2, 2.0), (0, 1, 0)))
        session = BackendSession(mode="oracle", oracle=room, depth_scale=2.0,
                                 camera=camera)
        frame = self._frame_from_partial_room(room, camera, drop=(2, 3))
        aligned, fit = predict_and_align(session, frame)
        # Doubled predicted depth halves predicted disparity; gamma doubles
        # to compensate (the gauge property: gamma' = s * gamma).
        assert fit.gamma == pytest.approx(2.0, rel=1e-9)
        assert fit.beta == pytest.approx(0.0, abs=1e-9)

        analytic = room.cast_depth(camera)
        from meshgrow.imaging import dilate
        boundary = (frame.mask & dilate(~frame.mask, 3)) | \
                   (~frame.mask & dilate(frame.mask, 3))
        off_boundary = ~dilate(dilate(boundary, 3), 3)
        assert np.abs(aligned - analytic)[off_boundary].max() < 1e-6

    def test_first_frame_all_unobserved_skips_fit(self, caplog):
        room = BoxRoom()
        camera = camera_from_fov(32, 32, 75.0,
                                 look_at((0.1, 1.3, 0.1), (0.0, 1.3, 2.0), (0, 1, 0)))
        session = BackendSession(mode="oracle", oracle=room, camera=camera)
        frame = FrameBundle(rgb=np.zeros((32, 32, 3)),
                            depth=np.full((32, 32), NO_HIT),
                            mask=np.ones((32, 32), dtype=bool))
        with caplog.at_level("WARNING"):
            aligned, fit = predict_and_align(session, frame)
        assert fit == DisparityAlignment.identity()
        assert not caplog.records  # skipped, not a degenerate-fit warning
        np.testing.assert_allclose(aligned, room.cast_depth(camera), atol=1e-12)
