"""Convex polygon primitives: validation, area, clipping, IoU."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Tolerances at unit scene scale (double precision safe margins).
DEGENERACY_TOL = 1e-9
EMPTY_INTERSECTION_TOL = 1e-12


class PolygonError(ValueError):
    """Vertex ring fails the convex-polygon requirements."""


class Polygon:
    """Convex polygon stored as a counter-clockwise vertex ring.

    Clockwise input is silently reversed; non-convex or degenerate
    rings are rejected with :class:`PolygonError`.
    """

    __slots__ = ("vertices",)

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise PolygonError(f"expected (n>=3, 2) vertex array, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise PolygonError("non-finite vertex coordinate")
        d = np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1)
        if np.any(d < DEGENERACY_TOL):
            raise PolygonError("consecutive vertices coincide")
        signed = _signed_area(v)
        if signed < 0:
            v = v[::-1].copy()
            signed = -signed
        if signed <= DEGENERACY_TOL:
            raise PolygonError("degenerate ring: area is not strictly positive")
        edges = np.roll(v, -1, axis=0) - v
        cross = _cross2(edges, np.roll(edges, -1, axis=0))
        # scale-aware convexity margin
        scale = float(np.max(np.abs(edges))) or 1.0
        if np.any(cross < -DEGENERACY_TOL * scale * scale):
            raise PolygonError("vertex ring is not convex")
        v.setflags(write=False)
        self.vertices = v

    def __repr__(self):
        return f"Polygon({self.vertices.tolist()!r})"

    def __eq__(self, other):
        if not isinstance(other, Polygon):
            return NotImplemented
        return self.vertices.shape == other.vertices.shape and np.array_equal(
            self.vertices, other.vertices
        )

    def bounds(self):
        """Axis-aligned (x_min, y_min, x_max, y_max) of the ring."""
        v = self.vertices
        return float(v[:, 0].min()), float(v[:, 1].min()), float(v[:, 0].max()), float(v[:, 1].max())


@dataclass(frozen=True)
class AABB:
    """Axis-aligned box, convertible to a 4-vertex polygon."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise PolygonError("AABB requires x_min < x_max and y_min < y_max")

    def to_polygon(self) -> Polygon:
        return Polygon(
            [
                (self.x_min, self.y_min),
                (self.x_max, self.y_min),
                (self.x_max, self.y_max),
                (self.x_min, self.y_max),
            ]
        )


def _cross2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """z-component of the 2-D cross product, broadcasting over rows."""
    a = np.asarray(a)
    b = np.asarray(b)
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _signed_area(v: np.ndarray) -> float:
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def area(p: Polygon) -> float:
    """Shoelace area of a valid polygon (strictly positive)."""
    return _signed_area(p.vertices)


def _clip_by_edge(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Keep the part of the ring on the left of directed edge a->b."""
    if len(points) == 0:
        return points
    e = b - a
    side = _cross2(e, points - a)
    out = []
    n = len(points)
    for i in range(n):
        s, t = points[i], points[(i + 1) % n]
        s_in, t_in = side[i] >= 0.0, side[(i + 1) % n] >= 0.0
        if s_in:
            out.append(s)
        if s_in != t_in:
            # segment crosses the clipping line
            denom = side[i] - side[(i + 1) % n]
            u = side[i] / denom
            out.append(s + u * (t - s))
    return np.asarray(out) if out else np.empty((0, 2))


def intersect(a: Polygon, b: Polygon) -> Polygon | None:
    """Sutherland-Hodgman clip of ``a`` against ``b``.

    Returns None when the intersection area falls below the
    empty-intersection cutoff.
    """
    ring = a.vertices
    bv = b.vertices
    for i in range(len(bv)):
        ring = _clip_by_edge(ring, bv[i], bv[(i + 1) % len(bv)])
        if len(ring) < 3:
            return None
    # drop points merged by numerical clipping
    keep = np.linalg.norm(ring - np.roll(ring, 1, axis=0), axis=1) >= DEGENERACY_TOL
    ring = ring[keep]
    if len(ring) < 3 or abs(_signed_area(ring)) < EMPTY_INTERSECTION_TOL:
        return None
    return Polygon(ring)


def iou(d: Polygon, g: Polygon) -> float:
    """Intersection-over-union of two convex polygons, clamped to [0, 1]."""
    inter = intersect(d, g)
    if inter is None:
        return 0.0
    ai = area(inter)
    union = area(d) + area(g) - ai
    if union <= 0.0:
        return 1.0
    return min(max(ai / union, 0.0), 1.0)
