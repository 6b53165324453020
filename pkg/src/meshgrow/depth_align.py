"""Scale/shift alignment of predicted depth against rendered depth.

The fit is solved in disparity space: find (gamma, beta) minimizing

    sum over observed pixels of (gamma / d_pred + beta - 1 / d_rendered)^2

by the closed-form 2x2 normal equations, then the aligned depth is
1 / (gamma / d_pred + beta). A 5x5 Gaussian smooths the seam between
rendered and newly predicted depth.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import imaging
from .geometry import FrameBundle

log = logging.getLogger(__name__)

DEPTH_EPS = 1e-4
DEPTH_MAX = 100.0
SMOOTH_KERNEL = 5
SMOOTH_SIGMA = 1.0
CONDITION_LIMIT = 1e12


class DegenerateFitError(ValueError):
    """The disparity fit is under-constrained (too few observed pixels or
    constant predicted disparity)."""


@dataclass(frozen=True)
class DisparityAlignment:
    gamma: float
    beta: float

    @staticmethod
    def identity() -> "DisparityAlignment":
        return DisparityAlignment(1.0, 0.0)

    def residual(self, pred_disp: np.ndarray, rendered_disp: np.ndarray) -> float:
        r = self.gamma * pred_disp + self.beta - rendered_disp
        return float(np.dot(r, r))


def solve_scale_shift(pred_depth: np.ndarray, rendered_depth: np.ndarray,
                      mask: np.ndarray) -> DisparityAlignment:
    """Least-squares (gamma, beta) over observed pixels (mask == 0)."""
    observed = ~np.asarray(mask, dtype=bool) & np.isfinite(rendered_depth)
    if int(observed.sum()) < 2:
        raise DegenerateFitError("need at least 2 observed pixels")

    x = 1.0 / np.maximum(np.asarray(pred_depth, dtype=np.float64)[observed], DEPTH_EPS)
    y = 1.0 / np.maximum(np.asarray(rendered_depth, dtype=np.float64)[observed], DEPTH_EPS)

    n = float(len(x))
    sx = float(x.sum())
    sxx = float(np.dot(x, x))
    normal = np.array([[sxx, sx], [sx, n]])
    if np.linalg.cond(normal) > CONDITION_LIMIT:
        raise DegenerateFitError("predicted disparity is constant over observed pixels")

    gamma, beta = np.linalg.solve(normal, np.array([float(np.dot(x, y)), float(y.sum())]))
    if not (np.isfinite(gamma) and np.isfinite(beta)) or gamma <= 0.0:
        raise DegenerateFitError(f"fit produced unusable scale gamma={gamma!r}")
    return DisparityAlignment(float(gamma), float(beta))


def apply_alignment(pred_depth: np.ndarray, alignment: DisparityAlignment) -> np.ndarray:
    """Aligned depth 1/(gamma/d + beta), clamped into (DEPTH_EPS, DEPTH_MAX]."""
    d = np.maximum(np.asarray(pred_depth, dtype=np.float64), DEPTH_EPS)
    disparity = alignment.gamma / d + alignment.beta
    disparity = np.clip(disparity, 1.0 / DEPTH_MAX, 1.0 / DEPTH_EPS)
    return 1.0 / disparity


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    r = size // 2
    g = np.exp(-np.arange(-r, r + 1, dtype=np.float64) ** 2 / (2.0 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


def smooth_mask_edges(depth: np.ndarray, mask: np.ndarray,
                      size: int = SMOOTH_KERNEL, sigma: float = SMOOTH_SIGMA) -> np.ndarray:
    """Gaussian-blur depth, but only within Chebyshev distance 2 of a mask
    boundary; every other pixel is returned bit-identical."""
    mask = np.asarray(mask, dtype=bool)
    boundary = (mask & imaging.dilate(~mask, 3)) | (~mask & imaging.dilate(mask, 3))
    if not boundary.any():
        return np.array(depth, copy=True)
    region = imaging.dilate(boundary, size)

    kernel = _gaussian_kernel(size, sigma)
    r = size // 2
    padded = np.pad(np.asarray(depth, dtype=np.float64), r, mode="reflect")
    blurred = np.zeros_like(np.asarray(depth, dtype=np.float64))
    h, w = blurred.shape
    for dy in range(size):
        for dx in range(size):
            blurred += kernel[dy, dx] * padded[dy:dy + h, dx:dx + w]
    return np.where(region, blurred, depth)


def predict_and_align(session, frame: FrameBundle,
                      ) -> tuple[np.ndarray, DisparityAlignment]:
    """Inpaint depth through the backend, align it to the rendered depth,
    composite (rendered where observed), and smooth the seam.

    Returns (aligned depth raster, fit). A degenerate fit falls back to the
    identity alignment; a frame with no observed pixels skips the fit.
    """
    from . import backends  # local import to keep module deps acyclic

    known = np.where(frame.mask, 0.0, frame.depth)
    pred = backends.inpaint_depth(session, frame.rgb, known, frame.mask)

    observed = ~frame.mask
    if not observed.any():
        fit = DisparityAlignment.identity()
    else:
        try:
            fit = solve_scale_shift(pred, frame.depth, frame.mask)
        except DegenerateFitError as err:
            log.warning("depth alignment fell back to identity: %s", err)
            fit = DisparityAlignment.identity()

    aligned = apply_alignment(pred, fit)
    composite = np.where(frame.mask, aligned, frame.depth)
    return smooth_mask_edges(composite, frame.mask), fit
