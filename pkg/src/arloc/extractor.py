"""Simplified scale-space keypoint extractor.

Builds a single-octave Gaussian scale space L(x, y, sigma) and, for each
derivative order n, takes the nth finite difference of L along the sigma axis.
Strict local extrema of those difference volumes over their 3x3x3 neighborhood
(with |value| above a contrast threshold) become keypoints. Higher orders add
keypoints on top of the lower orders, so the detected set grows monotonically
with max_order.

Descriptors are 16-entry gradient-orientation histograms (2x2 spatial cells x
4 orientation bins) over a patch scaled to the keypoint's sigma, L2-normalized.
"""
from __future__ import annotations

import numpy as np
from scipy import ndimage

from .vision import Keypoint, KeypointSet

NUM_LEVELS = 8
SIGMA0 = 1.6
SIGMA_STEP = 2.0 ** (1.0 / 3.0)
CONTRAST_THRESHOLD = 5e-4
DESCRIPTOR_CELLS = 2
DESCRIPTOR_BINS = 4

_NEIGHBOR_OFFSETS = [
    (ds, dy, dx)
    for ds in (-1, 0, 1)
    for dy in (-1, 0, 1)
    for dx in (-1, 0, 1)
    if (ds, dy, dx) != (0, 0, 0)
]


def scale_space(image: np.ndarray, num_levels: int = NUM_LEVELS,
                sigma0: float = SIGMA0, step: float = SIGMA_STEP):
    """Gaussian blur stack and its sigma values, one octave, multiplicative steps."""
    sigmas = sigma0 * step ** np.arange(num_levels)
    levels = np.stack([ndimage.gaussian_filter(image, s, mode="nearest") for s in sigmas])
    return levels, sigmas


def _strict_extrema(volume: np.ndarray, threshold: float):
    """Interior (level, y, x) indices that strictly dominate all 26 neighbors."""
    if volume.shape[0] < 3:
        return []
    center = volume[1:-1, 1:-1, 1:-1]
    is_max = np.ones(center.shape, dtype=bool)
    is_min = np.ones(center.shape, dtype=bool)
    ns, ny, nx = volume.shape
    for ds, dy, dx in _NEIGHBOR_OFFSETS:
        shifted = volume[1 + ds:ns - 1 + ds, 1 + dy:ny - 1 + dy, 1 + dx:nx - 1 + dx]
        is_max &= center > shifted
        is_min &= center < shifted
    mask = (is_max | is_min) & (np.abs(center) >= threshold)
    return [(s + 1, y + 1, x + 1) for s, y, x in zip(*np.nonzero(mask))]


def _patch_descriptor(level: np.ndarray, x: int, y: int, sigma: float,
                      cells: int = DESCRIPTOR_CELLS, bins: int = DESCRIPTOR_BINS) -> np.ndarray:
    """Orientation histogram over a (2 * half)^2 patch split into cells x cells blocks."""
    h, w = level.shape
    half = max(3, int(round(2.5 * sigma)))
    ys = np.clip(np.arange(y - half, y + half), 0, h - 1)
    xs = np.clip(np.arange(x - half, x + half), 0, w - 1)
    patch = level[np.ix_(ys, xs)]
    gy, gx = np.gradient(patch)
    mag = np.hypot(gx, gy)
    ang = np.arctan2(gy, gx)
    bin_idx = np.floor((ang + np.pi) / (2 * np.pi) * bins).astype(int) % bins

    hist = np.zeros((cells, cells, bins))
    cell_h = patch.shape[0] // cells
    cell_w = patch.shape[1] // cells
    for cy in range(cells):
        for cx in range(cells):
            sl = (slice(cy * cell_h, (cy + 1) * cell_h), slice(cx * cell_w, (cx + 1) * cell_w))
            np.add.at(hist[cy, cx], bin_idx[sl].ravel(), mag[sl].ravel())
    flat = hist.ravel()
    norm = np.linalg.norm(flat)
    return flat / norm if norm > 0 else flat


def extract_keypoints(image, max_order: int = 4, *,
                      num_levels: int = NUM_LEVELS, sigma0: float = SIGMA0,
                      step: float = SIGMA_STEP,
                      contrast_threshold: float = CONTRAST_THRESHOLD) -> KeypointSet:
    """Detect keypoints from sigma-derivative extrema of orders 1..max_order."""
    img = np.asarray(image, dtype=float)
    if img.ndim != 2 or min(img.shape) < 16:
        raise ValueError(f"image must be 2D and at least 16x16, got shape {img.shape}")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValueError("pixel values must lie in [0, 1]")
    if not 1 <= max_order <= 4:
        raise ValueError(f"max_order must be in 1..4, got {max_order}")

    levels, sigmas = scale_space(img, num_levels, sigma0, step)
    seen: dict[tuple[int, int, int], Keypoint] = {}
    for order in range(1, max_order + 1):
        diff = np.diff(levels, n=order, axis=0)
        for s, y, x in _strict_extrema(diff, contrast_threshold):
            key = (x, y, s)
            if key in seen:
                continue
            sigma = float(sigmas[s])
            desc = _patch_descriptor(levels[s], x, y, sigma)
            seen[key] = Keypoint(px=float(x), py=float(y), sigma=sigma, descriptor=desc)
    return KeypointSet(keypoints=list(seen.values()))
