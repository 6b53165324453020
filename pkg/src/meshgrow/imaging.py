"""Raster utilities: binary morphology, fast-marching inpainting, mask
cleaning for the completion stage, and PNG snapshots.

Border convention for morphology: out-of-bounds pixels count as 0 for both
erosion and dilation.
"""

from __future__ import annotations

import heapq
import math

import numpy as np
from PIL import Image
from scipy import ndimage

from .geometry import NO_HIT, FrameBundle

ERODE_KERNEL = 3
DILATE_KERNEL = 7
DILATE_REPEATS = 5
TELEA_RADIUS = 3


class InpaintError(ValueError):
    """Raised when classical inpainting has no known pixels to draw from."""


def erode(mask: np.ndarray, kernel: int = ERODE_KERNEL) -> np.ndarray:
    """Binary erosion: 1 iff the full kernel x kernel neighborhood is 1."""
    structure = np.ones((kernel, kernel), dtype=bool)
    return ndimage.binary_erosion(np.asarray(mask, dtype=bool),
                                  structure=structure, border_value=0)


def dilate(mask: np.ndarray, kernel: int = DILATE_KERNEL) -> np.ndarray:
    """Binary dilation: neighborhood max with the kernel x kernel window."""
    structure = np.ones((kernel, kernel), dtype=bool)
    return ndimage.binary_dilation(np.asarray(mask, dtype=bool),
                                   structure=structure, border_value=0)


def dilate_repeated(mask: np.ndarray, kernel: int = DILATE_KERNEL,
                    times: int = DILATE_REPEATS) -> np.ndarray:
    out = np.asarray(mask, dtype=bool)
    for _ in range(times):
        out = dilate(out, kernel)
    return out


def _eikonal_update(dist, frozen, y, x):
    h, w = dist.shape
    a = math.inf
    if x > 0 and frozen[y, x - 1]:
        a = dist[y, x - 1]
    if x + 1 < w and frozen[y, x + 1]:
        a = min(a, dist[y, x + 1])
    b = math.inf
    if y > 0 and frozen[y - 1, x]:
        b = dist[y - 1, x]
    if y + 1 < h and frozen[y + 1, x]:
        b = min(b, dist[y + 1, x])
    if math.isinf(a) and math.isinf(b):
        return math.inf
    if abs(a - b) >= 1.0 or math.isinf(a) or math.isinf(b):
        return min(a, b) + 1.0
    return 0.5 * (a + b + math.sqrt(2.0 - (a - b) ** 2))


def telea_inpaint(rgb: np.ndarray, mask: np.ndarray,
                  radius: int = TELEA_RADIUS) -> np.ndarray:
    """Fast-marching inpainting of mask=1 pixels.

    Pixels are filled in increasing distance from the hole boundary; each
    fill is a normalized weighted average of already-known pixels within
    `radius`, weighted by direction (alignment with the march front normal),
    geometric distance and level-set proximity. Known pixels are returned
    bit-identical, and filled values stay inside the known-value range.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.all():
        raise InpaintError("cannot inpaint: the mask covers the whole image")
    out = np.array(rgb, dtype=np.float64, copy=True)
    if not mask.any():
        return out
    flat = out.reshape(out.shape[0], out.shape[1], -1)
    h, w = mask.shape

    frozen = ~mask
    dist = np.where(mask, np.inf, 0.0)

    heap: list[tuple[float, int, int]] = []
    boundary = mask & dilate(~mask, 3)
    for y, x in np.argwhere(boundary):
        t = _eikonal_update(dist, frozen, y, x)
        dist[y, x] = t
        heapq.heappush(heap, (t, y, x))

    offsets = [(dy, dx)
               for dy in range(-radius, radius + 1)
               for dx in range(-radius, radius + 1)
               if (dy or dx) and dy * dy + dx * dx <= radius * radius]

    while heap:
        t, y, x = heapq.heappop(heap)
        if frozen[y, x] or t > dist[y, x]:
            continue
        frozen[y, x] = True

        # March-front normal from the distance field: central differences
        # over frozen neighbors, one-sided where only one side is frozen.
        gx = gy = 0.0
        left = x > 0 and frozen[y, x - 1]
        right = x + 1 < w and frozen[y, x + 1]
        if left and right:
            gx = 0.5 * (dist[y, x + 1] - dist[y, x - 1])
        elif right:
            gx = dist[y, x + 1] - t
        elif left:
            gx = t - dist[y, x - 1]
        up = y > 0 and frozen[y - 1, x]
        down = y + 1 < h and frozen[y + 1, x]
        if up and down:
            gy = 0.5 * (dist[y + 1, x] - dist[y - 1, x])
        elif down:
            gy = dist[y + 1, x] - t
        elif up:
            gy = t - dist[y - 1, x]

        acc = np.zeros(flat.shape[2])
        total = 0.0
        for dy, dx in offsets:
            qy, qx = y + dy, x + dx
            if not (0 <= qy < h and 0 <= qx < w) or not frozen[qy, qx]:
                continue
            length = math.sqrt(dx * dx + dy * dy)
            direction = abs(dx * gx + dy * gy) / length
            if direction < 1e-6:
                direction = 1e-6
            weight = direction / (length * length) / (1.0 + abs(dist[qy, qx] - t))
            acc += weight * flat[qy, qx]
            total += weight
        flat[y, x] = acc / total

        for dy, dx in ((0, -1), (0, 1), (-1, 0), (1, 0)):
            qy, qx = y + dy, x + dx
            if 0 <= qy < h and 0 <= qx < w and not frozen[qy, qx]:
                tq = _eikonal_update(dist, frozen, qy, qx)
                if tq < dist[qy, qx]:
                    dist[qy, qx] = tq
                    heapq.heappush(heap, (tq, qy, qx))
    return out


def clean_inpaint_mask(frame: FrameBundle):
    """Split the unobserved mask into small holes (filled classically in
    the RGB raster) and large holes (grown for the generative backend).

    Returns (cleaned rgb, dilated mask, small-hole mask). When the whole
    frame is unobserved there is nothing to clean and the raw mask passes
    through untouched.
    """
    mask = frame.mask
    if mask.all():
        return frame.rgb.copy(), mask.copy(), np.zeros_like(mask)

    surviving = erode(mask)
    small = mask & ~surviving
    cleaned = telea_inpaint(frame.rgb, small) if small.any() else frame.rgb.copy()
    dilated = dilate_repeated(surviving) if surviving.any() else surviving
    return cleaned, dilated, small


def mask_stats(frame: FrameBundle) -> tuple[int, float | None]:
    """(unobserved pixel count, mean depth over observed pixels or None)."""
    unobserved = int(frame.mask.sum())
    observed = ~frame.mask
    if not observed.any():
        return unobserved, None
    return unobserved, float(frame.depth[observed].mean())


# -- PNG snapshots ----------------------------------------------------------

def save_rgb_png(rgb: np.ndarray, path) -> None:
    arr = np.round(np.clip(rgb, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path)


def load_rgb_png(path) -> np.ndarray:
    arr = np.asarray(Image.open(path).convert("RGB"), dtype=np.float64)
    return arr / 255.0


def save_depth_png(depth: np.ndarray, path) -> None:
    """16-bit grayscale, millimeter-quantized; no-hit pixels store 0."""
    mm = np.where(np.isfinite(depth), np.round(depth * 1000.0), 0.0)
    arr = np.clip(mm, 0, 65535).astype(np.uint16)
    Image.fromarray(arr, mode="I;16").save(path)


def load_depth_png(path) -> np.ndarray:
    arr = np.asarray(Image.open(path), dtype=np.float64) / 1000.0
    return np.where(arr == 0.0, NO_HIT, arr)
