"""Planar geometry in projected meters.

Points, axis-aligned rectangles and circles are immutable named tuples so
they can be shared freely between snapshots and tasks.
"""
from __future__ import annotations

import math
import random
from typing import Iterable, NamedTuple, Sequence

import numpy as np

TOL = 1e-9


class DegenerateRegionError(ValueError):
    """Raised when a region-level quantity is requested for an empty region."""


class Point(NamedTuple):
    x: float
    y: float


class Rect(NamedTuple):
    min_x: float
    min_y: float
    max_x: float
    max_y: float

    @property
    def width(self) -> float:
        return self.max_x - self.min_x

    @property
    def height(self) -> float:
        return self.max_y - self.min_y

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)

    def corners(self) -> list[Point]:
        return [
            Point(self.min_x, self.min_y),
            Point(self.max_x, self.min_y),
            Point(self.max_x, self.max_y),
            Point(self.min_x, self.max_y),
        ]

    def contains(self, p: Point) -> bool:
        return self.min_x <= p[0] <= self.max_x and self.min_y <= p[1] <= self.max_y


def make_rect(min_x, min_y, max_x, max_y) -> Rect:
    r = Rect(float(min_x), float(min_y), float(max_x), float(max_y))
    if not (r.min_x < r.max_x and r.min_y < r.max_y):
        raise ValueError(f"rectangle has no area: {r}")
    return r


class Circle(NamedTuple):
    center: Point
    radius: float

    def contains(self, p, tol: float = TOL) -> bool:
        return math.hypot(p[0] - self.center[0], p[1] - self.center[1]) <= self.radius + tol


def distance(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def corner_mean_distance(cell: Rect, p) -> float:
    """Mean distance from ``p`` to the four corners of ``cell``."""
    x, y = p
    dx0, dx1 = x - cell.min_x, x - cell.max_x
    dy0, dy1 = y - cell.min_y, y - cell.max_y
    return (
        math.hypot(dx0, dy0) + math.hypot(dx1, dy0) + math.hypot(dx1, dy1) + math.hypot(dx0, dy1)
    ) / 4.0


def corner_mean_distances(rects: np.ndarray, p) -> np.ndarray:
    """Vectorised :func:`corner_mean_distance` over an ``(n, 4)`` rect array."""
    x, y = p
    dx0 = x - rects[:, 0]
    dy0 = y - rects[:, 1]
    dx1 = x - rects[:, 2]
    dy1 = y - rects[:, 3]
    return (np.hypot(dx0, dy0) + np.hypot(dx1, dy0) + np.hypot(dx1, dy1) + np.hypot(dx0, dy1)) / 4.0


def rect_point_distances(rects: np.ndarray, p) -> np.ndarray:
    """Distance from ``p`` to the closest point of each rect (0 inside)."""
    x, y = p
    dx = np.maximum(np.maximum(rects[:, 0] - x, x - rects[:, 2]), 0.0)
    dy = np.maximum(np.maximum(rects[:, 1] - y, y - rects[:, 3]), 0.0)
    return np.hypot(dx, dy)


def cells_adjacent(a: Rect, b: Rect, tol: float = TOL) -> bool:
    """True iff ``a`` and ``b`` share a boundary segment of positive length.

    Corner-only contact does not count.
    """
    if abs(a.max_x - b.min_x) <= tol or abs(b.max_x - a.min_x) <= tol:
        overlap = min(a.max_y, b.max_y) - max(a.min_y, b.min_y)
        return overlap > tol
    if abs(a.max_y - b.min_y) <= tol or abs(b.max_y - a.min_y) <= tol:
        overlap = min(a.max_x, b.max_x) - max(a.min_x, b.min_x)
        return overlap > tol
    return False


def rect_corners(rects: Iterable[Rect] | np.ndarray) -> np.ndarray:
    """Unique corner points of a collection of rects as an ``(k, 2)`` array."""
    arr = np.asarray(list(rects) if not isinstance(rects, np.ndarray) else rects, dtype=float)
    if arr.size == 0:
        raise DegenerateRegionError("region has no cells")
    arr = arr.reshape(-1, 4)
    pts = np.concatenate(
        [arr[:, [0, 1]], arr[:, [2, 1]], arr[:, [2, 3]], arr[:, [0, 3]]], axis=0
    )
    return np.unique(pts, axis=0)


def point_set_diameter(points: np.ndarray) -> float:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise DegenerateRegionError("no points")
    if len(pts) == 1:
        return 0.0
    if len(pts) > 64:
        # Farthest pair lies on the convex hull.
        from scipy.spatial import ConvexHull, QhullError

        try:
            pts = pts[ConvexHull(pts).vertices]
        except QhullError:
            pass
    diff = pts[:, None, :] - pts[None, :, :]
    return float(np.sqrt((diff ** 2).sum(axis=-1)).max())


def region_diameter(cells: Sequence[Rect] | np.ndarray) -> float:
    """Largest distance between any two corners of the region's cells."""
    return point_set_diameter(rect_corners(cells))


# Minimum enclosing circle: iterative Welzl-style incremental construction,
# expected O(n) on a shuffled input.

def _circle_two(a, b) -> Circle:
    cx = (a[0] + b[0]) / 2.0
    cy = (a[1] + b[1]) / 2.0
    return Circle(Point(cx, cy), max(math.hypot(cx - a[0], cy - a[1]), math.hypot(cx - b[0], cy - b[1])))


def _circumcircle(a, b, c) -> Circle | None:
    ox = (min(a[0], b[0], c[0]) + max(a[0], b[0], c[0])) / 2.0
    oy = (min(a[1], b[1], c[1]) + max(a[1], b[1], c[1])) / 2.0
    ax, ay = a[0] - ox, a[1] - oy
    bx, by = b[0] - ox, b[1] - oy
    cx, cy = c[0] - ox, c[1] - oy
    d = (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by)) * 2.0
    if d == 0.0:
        return None
    x = ox + ((ax * ax + ay * ay) * (by - cy) + (bx * bx + by * by) * (cy - ay) + (cx * cx + cy * cy) * (ay - by)) / d
    y = oy + ((ax * ax + ay * ay) * (cx - bx) + (bx * bx + by * by) * (ax - cx) + (cx * cx + cy * cy) * (bx - ax)) / d
    r = max(math.hypot(x - p[0], y - p[1]) for p in (a, b, c))
    return Circle(Point(x, y), r)


def _inside(c: Circle | None, p) -> bool:
    return c is not None and math.hypot(p[0] - c.center[0], p[1] - c.center[1]) <= c.radius * (1 + 1e-14) + 1e-12


def _circle_with_two(points, p, q) -> Circle:
    base = _circle_two(p, q)
    left = right = None
    qx, qy = q[0] - p[0], q[1] - p[1]
    for r in points:
        if _inside(base, r):
            continue
        cross = qx * (r[1] - p[1]) - qy * (r[0] - p[0])
        c = _circumcircle(p, q, r)
        if c is None:
            continue
        side = qx * (c.center[1] - p[1]) - qy * (c.center[0] - p[0])
        if cross > 0.0 and (left is None or side > qx * (left.center[1] - p[1]) - qy * (left.center[0] - p[0])):
            left = c
        elif cross < 0.0 and (right is None or side < qx * (right.center[1] - p[1]) - qy * (right.center[0] - p[0])):
            right = c
    if left is None and right is None:
        return base
    if left is None:
        return right
    if right is None:
        return left
    return left if left.radius <= right.radius else right


def _circle_with_one(points, p) -> Circle:
    c = Circle(Point(p[0], p[1]), 0.0)
    for i, q in enumerate(points):
        if not _inside(c, q):
            c = _circle_two(p, q) if c.radius == 0.0 else _circle_with_two(points[: i + 1], p, q)
    return c


def min_enclosing_circle(points, seed: int = 0) -> Circle:
    """Smallest circle containing every point.

    The input order is shuffled with a fixed ``seed`` so repeated calls on
    the same input return the same circle.
    """
    pts = [(float(p[0]), float(p[1])) for p in points]
    if not pts:
        raise DegenerateRegionError("cannot enclose an empty point set")
    random.Random(seed).shuffle(pts)
    c: Circle | None = None
    for i, p in enumerate(pts):
        if c is None or not _inside(c, p):
            c = _circle_with_one(pts[: i + 1], p)
    return c
