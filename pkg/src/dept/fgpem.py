"""Pseudo labels from four extreme points.

Pipeline: gradient of the source raster -> reciprocal cost matrix -> four
minimum-cost paths top->left->bottom->right->top -> closed contour -> filled
mask. Tracing runs on a downsampled copy and the filled label is bilinearly
upsampled and thresholded back at full resolution.
"""
from __future__ import annotations

import json
import logging
import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .preprocess import (
    DEFAULT_CLIP_LIMIT,
    DEFAULT_EPSILON,
    DEFAULT_TILES,
    CostMatrix,
    build_cost_matrix,
    clahe,
    sobel_gradient,
)
from .raster import Point, PathLike, as_feature_map, as_mask, in_bounds, resize_bilinear, threshold_mask
from .tracing import dijkstra_path, straight_segment

logger = logging.getLogger(__name__)

UPSAMPLE_THRESHOLD = 0.5


class EmptyMaskError(ValueError):
    pass


@dataclass(frozen=True)
class ExtremePoints:
    top: Point
    bottom: Point
    left: Point
    right: Point

    def __post_init__(self):
        for name in ("top", "bottom", "left", "right"):
            p = getattr(self, name)
            object.__setattr__(self, name, Point(int(p[0]), int(p[1])))
        if self.top.row > self.bottom.row:
            raise ValueError(f"top row {self.top.row} below bottom row {self.bottom.row}")
        if self.left.col > self.right.col:
            raise ValueError(f"left col {self.left.col} right of right col {self.right.col}")

    def as_tuple(self) -> tuple[Point, Point, Point, Point]:
        return (self.top, self.bottom, self.left, self.right)

    def check_bounds(self, shape: tuple[int, int]) -> None:
        for name, p in zip(("top", "bottom", "left", "right"), self.as_tuple()):
            if not in_bounds(p, shape):
                raise IndexError(f"{name} point {tuple(p)} out of bounds for {shape[0]}x{shape[1]} raster")

    def scaled(self, s: float, shape: tuple[int, int]) -> "ExtremePoints":
        """Points mapped to a raster resized by *s*: ``clamp(round(p * s))``."""
        h, w = shape

        def f(p: Point) -> Point:
            r = min(max(math.floor(p.row * s + 0.5), 0), h - 1)
            c = min(max(math.floor(p.col * s + 0.5), 0), w - 1)
            return Point(r, c)

        return ExtremePoints(f(self.top), f(self.bottom), f(self.left), f(self.right))

    def to_json(self) -> dict:
        return {k: [int(v[0]), int(v[1])] for k, v in zip(("top", "bottom", "left", "right"), self.as_tuple())}

    @classmethod
    def from_json(cls, doc: dict) -> "ExtremePoints":
        try:
            return cls(*(Point(int(doc[k][0]), int(doc[k][1])) for k in ("top", "bottom", "left", "right")))
        except (KeyError, IndexError, TypeError) as exc:
            raise ValueError(f"malformed extreme points document: {exc}") from exc


def load_points(path: PathLike) -> ExtremePoints:
    with open(path, encoding="utf-8") as fh:
        return ExtremePoints.from_json(json.load(fh))


@dataclass(frozen=True)
class FgpemOptions:
    scale: float = 0.5
    epsilon: float = DEFAULT_EPSILON
    normalize: bool = True
    use_straight_baseline: bool = False
    clip_limit: float = DEFAULT_CLIP_LIMIT
    tiles: tuple[int, int] = DEFAULT_TILES

    def __post_init__(self):
        if not 0 < self.scale <= 1:
            raise ValueError(f"scale must be in (0, 1], got {self.scale}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")


@dataclass
class Contour:
    points: list[Point]

    def __len__(self) -> int:
        return len(self.points)


# ---------------------------------------------------------------------
# Extreme points
# ---------------------------------------------------------------------
def count_components(mask) -> int:
    """Number of 8-connected foreground components."""
    from scipy import ndimage

    _, n = ndimage.label(np.asarray(mask), structure=np.ones((3, 3), dtype=int))
    return int(n)


def extract_extreme_points(mask) -> ExtremePoints:
    """Topmost, bottommost, leftmost and rightmost foreground pixels.

    Ties: top -> smallest col, bottom -> largest col, left -> smallest row,
    right -> largest row.
    """
    m = as_mask(mask)
    rows, cols = np.nonzero(m)
    if rows.size == 0:
        raise EmptyMaskError("empty mask: no foreground pixels")
    # np.nonzero is row-major sorted
    top = Point(int(rows[0]), int(cols[0]))
    bottom = Point(int(rows[-1]), int(cols[-1]))
    cr, cc = np.nonzero(m.T)
    left = Point(int(cc[0]), int(cr[0]))
    right = Point(int(cc[-1]), int(cr[-1]))
    return ExtremePoints(top, bottom, left, right)


# ---------------------------------------------------------------------
# Contour tracing and fill
# ---------------------------------------------------------------------
def _is_degenerate(pts: ExtremePoints) -> bool:
    p = pts.as_tuple()
    if len(set(p)) == 1:
        return True
    (r0, c0) = p[0]
    return all((b[0] - r0) * (a[1] - c0) == (a[0] - r0) * (b[1] - c0) for a in p[1:] for b in p[1:])


def trace_contour(cost, pts: ExtremePoints, straight: bool = False) -> Contour:
    """Closed chain through the four points, in order top, left, bottom, right."""
    c = cost.cost if isinstance(cost, CostMatrix) else np.asarray(cost)
    order = (pts.top, pts.left, pts.bottom, pts.right, pts.top)
    chain: list[Point] = [order[0]]
    for a, b in zip(order, order[1:]):
        seg = straight_segment(a, b) if straight else dijkstra_path(c, a, b)
        chain.extend(seg.points[1:])
    if len(chain) > 1:
        chain.pop()  # closing pixel repeats the first one
    return Contour(chain)


def contour_mask(contour: Contour, width: int, height: int) -> np.ndarray:
    out = np.zeros((height, width), dtype=np.uint8)
    if contour.points:
        pts = np.asarray(contour.points, dtype=np.intp)
        if pts.min() < 0 or np.any(pts[:, 0] >= height) or np.any(pts[:, 1] >= width):
            raise IndexError("contour pixel out of bounds")
        out[pts[:, 0], pts[:, 1]] = 1
    return out


def fill_contour(contour: Contour, width: int, height: int) -> np.ndarray:
    """Rasterize the contour and everything it encloses.

    Background is flood filled 4-connectedly from every border pixel that is
    not on the contour; whatever the fill does not reach is foreground.
    """
    wall = contour_mask(contour, width, height).astype(bool)
    outside = np.zeros_like(wall)
    queue: deque[tuple[int, int]] = deque()
    border = [(r, c) for r in range(height) for c in (0, width - 1)]
    border += [(r, c) for c in range(width) for r in (0, height - 1)]
    for r, c in border:
        if not wall[r, c] and not outside[r, c]:
            outside[r, c] = True
            queue.append((r, c))
    while queue:
        r, c = queue.popleft()
        for rr, cc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if 0 <= rr < height and 0 <= cc < width and not wall[rr, cc] and not outside[rr, cc]:
                outside[rr, cc] = True
                queue.append((rr, cc))
    return (~outside).astype(np.uint8)


# ---------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------
def _low_res_shape(shape: tuple[int, int], scale: float) -> tuple[int, int]:
    h, w = shape
    return max(1, math.floor(h * scale + 0.5)), max(1, math.floor(w * scale + 0.5))


def fgpem_generate(source, pts: ExtremePoints, opts: FgpemOptions | None = None, apply_clahe: bool = False) -> np.ndarray:
    """Binary pseudo label for *source* (image or feature map) from *pts*.

    With *apply_clahe* the source must be a [0, 1] image; it is contrast
    enhanced before downsampling.
    """
    opts = opts or FgpemOptions()
    src = as_feature_map(source)
    shape = src.shape
    pts.check_bounds(shape)
    if _is_degenerate(pts):
        logger.warning("degenerate extreme points %s: label reduces to a line or point", pts.to_json())

    if apply_clahe:
        src = clahe(src, opts.clip_limit, opts.tiles)
    lh, lw = _low_res_shape(shape, opts.scale)
    small = resize_bilinear(src, lw, lh)
    small_pts = pts.scaled(opts.scale, (lh, lw))

    if opts.use_straight_baseline:
        cost = None
    else:
        cost = build_cost_matrix(sobel_gradient(small), opts.epsilon, opts.normalize)
    contour = trace_contour(cost, small_pts, straight=opts.use_straight_baseline)
    filled = fill_contour(contour, lw, lh)

    up = resize_bilinear(filled.astype(np.float64), shape[1], shape[0])
    return threshold_mask(up, UPSAMPLE_THRESHOLD)


def initial_pseudo_label(img, pts: ExtremePoints, opts: FgpemOptions | None = None) -> np.ndarray:
    """Epoch-0 label: CLAHE on the raw image, then :func:`fgpem_generate`."""
    return fgpem_generate(img, pts, opts, apply_clahe=True)
