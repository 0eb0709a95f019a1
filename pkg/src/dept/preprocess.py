"""Contrast enhancement, Sobel gradients and the reciprocal cost matrix."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .raster import RasterError, as_feature_map, as_gray_image

DEFAULT_EPSILON = 1e-5
DEFAULT_CLIP_LIMIT = 2.0
DEFAULT_TILES = (8, 8)

_NBINS = 256


@dataclass(frozen=True)
class GradientMap:
    gx: np.ndarray
    gy: np.ndarray
    magnitude: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.magnitude.shape


@dataclass(frozen=True)
class CostMatrix:
    """Per-pixel traversal cost ``1 / (m + epsilon)``; strictly positive."""

    cost: np.ndarray
    epsilon: float = DEFAULT_EPSILON
    normalized: bool = True

    @property
    def shape(self) -> tuple[int, int]:
        return self.cost.shape


# ---------------------------------------------------------------------
# CLAHE
# ---------------------------------------------------------------------
def _tile_edges(n: int, tiles: int) -> np.ndarray:
    return (np.arange(tiles + 1) * n) // tiles


def _tile_lut(block: np.ndarray, clip_limit: float) -> np.ndarray:
    hist = np.bincount(block.ravel(), minlength=_NBINS).astype(np.float64)
    limit = clip_limit * block.size / _NBINS
    excess = np.maximum(hist - limit, 0.0).sum()
    hist = np.minimum(hist, limit) + excess / _NBINS
    return np.cumsum(hist) / block.size


def _blend_axis(n: int, edges: np.ndarray):
    """Neighbouring tile indices and weight of the second one, per pixel."""
    centers = (edges[:-1] + edges[1:]) / 2.0 - 0.5
    pos = np.arange(n, dtype=np.float64)
    hi = np.searchsorted(centers, pos, side="right")
    i0 = np.clip(hi - 1, 0, len(centers) - 1)
    i1 = np.clip(hi, 0, len(centers) - 1)
    span = centers[i1] - centers[i0]
    w = np.where(span > 0, (pos - centers[i0]) / np.where(span > 0, span, 1.0), 0.0)
    return i0, i1, np.clip(w, 0.0, 1.0)


def clahe(img, clip_limit: float = DEFAULT_CLIP_LIMIT, tiles: tuple[int, int] = DEFAULT_TILES) -> np.ndarray:
    """Contrast limited adaptive histogram equalization.

    Parameters
    ----------
    img : array (H, W), values in [0, 1]
    clip_limit : float
        Histogram bins are clipped at ``clip_limit * tile_pixels / 256``;
        the clipped mass is spread uniformly over all 256 bins.
    tiles : (rows, cols)
        Tile grid. Images smaller than the grid fall back to a single tile.

    Returns
    -------
    array (H, W) in [0, 1]. Each pixel maps through the CDFs of the (up to)
    four nearest tile centers, blended bilinearly.
    """
    img = as_gray_image(img)
    ty, tx = int(tiles[0]), int(tiles[1])
    if ty < 1 or tx < 1:
        raise ValueError(f"tiles must be >= (1, 1), got {tiles}")
    if not clip_limit > 0:
        raise ValueError(f"clip_limit must be > 0, got {clip_limit}")
    h, w = img.shape
    if h < ty or w < tx:
        ty, tx = 1, 1

    bins = np.clip(np.floor(img * (_NBINS - 1) + 0.5), 0, _NBINS - 1).astype(np.intp)
    redges = _tile_edges(h, ty)
    cedges = _tile_edges(w, tx)
    luts = np.empty((ty, tx, _NBINS))
    for i in range(ty):
        for j in range(tx):
            block = bins[redges[i]:redges[i + 1], cedges[j]:cedges[j + 1]]
            luts[i, j] = _tile_lut(block, clip_limit)

    r0, r1, wr = _blend_axis(h, redges)
    c0, c1, wc = _blend_axis(w, cedges)
    R0, C0 = r0[:, None], c0[None, :]
    R1, C1 = r1[:, None], c1[None, :]
    WR, WC = wr[:, None], wc[None, :]
    top = (1 - WC) * luts[R0, C0, bins] + WC * luts[R0, C1, bins]
    bottom = (1 - WC) * luts[R1, C0, bins] + WC * luts[R1, C1, bins]
    out = (1 - WR) * top + WR * bottom
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------
# Sobel
# ---------------------------------------------------------------------
def sobel_gradient(raster) -> GradientMap:
    """3x3 Sobel responses with replicate border padding.

    ``gx`` is positive where values increase to the right, ``gy`` where they
    increase downwards; a ramp ``I(r, c) = c * s`` gives ``gx = 8 s``.
    """
    arr = as_feature_map(raster)
    p = np.pad(arr, 1, mode="edge")
    left = p[:-2, :-2] + 2.0 * p[1:-1, :-2] + p[2:, :-2]
    right = p[:-2, 2:] + 2.0 * p[1:-1, 2:] + p[2:, 2:]
    up = p[:-2, :-2] + 2.0 * p[:-2, 1:-1] + p[:-2, 2:]
    down = p[2:, :-2] + 2.0 * p[2:, 1:-1] + p[2:, 2:]
    gx = right - left
    gy = down - up
    return GradientMap(gx=gx, gy=gy, magnitude=np.hypot(gx, gy))


def build_cost_matrix(grad: GradientMap, epsilon: float = DEFAULT_EPSILON, normalize: bool = True) -> CostMatrix:
    if not epsilon > 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    m = np.asarray(grad.magnitude, dtype=np.float64)
    if not np.all(np.isfinite(m)):
        raise RasterError("gradient magnitude contains non-finite values")
    if normalize:
        peak = m.max()
        if peak > 0:
            m = m / peak
    return CostMatrix(cost=1.0 / (m + epsilon), epsilon=float(epsilon), normalized=normalize)
