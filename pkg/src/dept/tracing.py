"""Minimum-cost paths on the 8-connected pixel grid, plus straight segments."""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .preprocess import CostMatrix
from .raster import Point, in_bounds

SQRT2 = math.sqrt(2.0)

# (drow, dcol, step length)
_NEIGHBOURS = (
    (-1, -1, SQRT2), (-1, 0, 1.0), (-1, 1, SQRT2),
    (0, -1, 1.0), (0, 1, 1.0),
    (1, -1, SQRT2), (1, 0, 1.0), (1, 1, SQRT2),
)


@dataclass
class PixelPath:
    points: list[Point] = field(default_factory=list)
    total_cost: float = 0.0

    def __len__(self) -> int:
        return len(self.points)


def edge_weight(cost: np.ndarray, u: tuple[int, int], v: tuple[int, int]) -> float:
    """Mean of the two node costs times the Euclidean step length."""
    step = SQRT2 if (u[0] != v[0] and u[1] != v[1]) else 1.0
    return 0.5 * (float(cost[u]) + float(cost[v])) * step


def _cost_array(cost) -> np.ndarray:
    return cost.cost if isinstance(cost, CostMatrix) else np.asarray(cost, dtype=np.float64)


def dijkstra_path(cost, start: tuple[int, int], end: tuple[int, int]) -> PixelPath:
    """Cheapest 8-connected route from *start* to *end*.

    Edge ``u -> v`` costs ``(cost[u] + cost[v]) / 2 * |u - v|``. Ties in the
    frontier pop the lexicographically smaller ``(row, col)`` first, and a
    predecessor is only replaced on strict improvement, so the result is
    deterministic on flat cost.
    """
    c = _cost_array(cost)
    h, w = c.shape
    start = Point(int(start[0]), int(start[1]))
    end = Point(int(end[0]), int(end[1]))
    for name, p in (("start", start), ("end", end)):
        if not in_bounds(p, (h, w)):
            raise IndexError(f"{name} point {tuple(p)} out of bounds for {h}x{w} cost matrix")
    if start == end:
        return PixelPath([start], 0.0)

    flat = c.ravel().tolist()
    n = h * w
    dist = [math.inf] * n
    prev = [-1] * n
    done = bytearray(n)
    s = start.row * w + start.col
    goal = end.row * w + end.col
    dist[s] = 0.0
    heap = [(0.0, start.row, start.col)]
    pop, push = heapq.heappop, heapq.heappush

    while heap:
        d, r, col = pop(heap)
        u = r * w + col
        if done[u]:
            continue
        done[u] = 1
        if u == goal:
            break
        cu = flat[u]
        for dr, dc, length in _NEIGHBOURS:
            rr = r + dr
            cc = col + dc
            if rr < 0 or rr >= h or cc < 0 or cc >= w:
                continue
            v = rr * w + cc
            if done[v]:
                continue
            nd = d + 0.5 * (cu + flat[v]) * length
            if nd < dist[v]:
                dist[v] = nd
                prev[v] = u
                push(heap, (nd, rr, cc))

    if not done[goal]:
        raise RuntimeError("end point unreachable")  # cannot happen on a full grid
    chain = []
    u = goal
    while u != -1:
        chain.append(Point(u // w, u % w))
        u = prev[u]
    chain.reverse()
    return PixelPath(chain, dist[goal])


def straight_segment(a: tuple[int, int], b: tuple[int, int]) -> PixelPath:
    """8-connected Bresenham line from *a* to *b*, endpoints included."""
    r0, c0 = int(a[0]), int(a[1])
    r1, c1 = int(b[0]), int(b[1])
    dr, dc = abs(r1 - r0), abs(c1 - c0)
    sr = 1 if r1 > r0 else -1
    sc = 1 if c1 > c0 else -1
    err = dc - dr
    points = []
    r, c = r0, c0
    while True:
        points.append(Point(r, c))
        if r == r1 and c == c1:
            break
        e2 = 2 * err
        if e2 > -dr:
            err -= dr
            c += sc
        if e2 < dc:
            err += dc
            r += sr
    return PixelPath(points, 0.0)


def path_cost(cost, points) -> float:
    """Sum of edge weights along a chain of pixels."""
    c = _cost_array(cost)
    return float(sum(edge_weight(c, tuple(p), tuple(q)) for p, q in zip(points, points[1:])))


def is_chain(points) -> bool:
    return all(max(abs(p[0] - q[0]), abs(p[1] - q[1])) == 1 for p, q in zip(points, points[1:]))
