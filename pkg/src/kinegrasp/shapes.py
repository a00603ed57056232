"""Parametric 2D cross-sections of the graspable objects.

Eight training shapes (square, 5-point star, a smooth non-convex blob, half
circle, circle, hexagon, ellipse, and an irregular one-protrusion silhouette)
plus scaled category variants for the generalization benchmark. All boundaries
are simple closed CCW polylines with the area centroid at the origin and a
nominal maximal cross-section width of 40 mm at scale 1.0.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

NOMINAL_WIDTH_MM = 40.0
CURVE_VERTICES = 128  # sub-0.5 mm chord error at nominal size


class ShapeKind(enum.Enum):
    SQUARE = "square"
    STAR = "star"
    ARBITRARY_CURVED = "arbitrary_curved"
    HALF_CIRCLE = "half_circle"
    CIRCLE = "circle"
    HEXAGON = "hexagon"
    ELLIPSE = "ellipse"
    IRREGULAR_DUCK = "irregular_duck"


class ShapeCategory(enum.Enum):
    CIRCULAR = "circular"
    SEMI_CIRCULAR = "semi_circular"
    SQUARE = "square"
    ELLIPTICAL = "elliptical"
    OTHER = "other"


# Canonical label order of the training set; class index == position here.
TRAINING_KINDS = (
    ShapeKind.SQUARE,
    ShapeKind.STAR,
    ShapeKind.ARBITRARY_CURVED,
    ShapeKind.HALF_CIRCLE,
    ShapeKind.CIRCLE,
    ShapeKind.HEXAGON,
    ShapeKind.ELLIPSE,
    ShapeKind.IRREGULAR_DUCK,
)

KIND_TO_CATEGORY = {
    ShapeKind.CIRCLE: ShapeCategory.CIRCULAR,
    ShapeKind.HALF_CIRCLE: ShapeCategory.SEMI_CIRCULAR,
    ShapeKind.SQUARE: ShapeCategory.SQUARE,
    ShapeKind.ELLIPSE: ShapeCategory.ELLIPTICAL,
    ShapeKind.STAR: ShapeCategory.OTHER,
    ShapeKind.ARBITRARY_CURVED: ShapeCategory.OTHER,
    ShapeKind.HEXAGON: ShapeCategory.OTHER,
    ShapeKind.IRREGULAR_DUCK: ShapeCategory.OTHER,
}

CATEGORY_TO_BASE_KIND = {
    ShapeCategory.CIRCULAR: ShapeKind.CIRCLE,
    ShapeCategory.SEMI_CIRCULAR: ShapeKind.HALF_CIRCLE,
    ShapeCategory.SQUARE: ShapeKind.SQUARE,
    ShapeCategory.ELLIPTICAL: ShapeKind.ELLIPSE,
}

# Scale intervals (fraction of nominal size) exercised per category in the
# generalization benchmark.
CATEGORY_SCALE_RANGES = {
    ShapeCategory.CIRCULAR: (0.322, 1.937),
    ShapeCategory.SEMI_CIRCULAR: (0.560, 1.815),
    ShapeCategory.SQUARE: (0.435, 1.353),
    ShapeCategory.ELLIPTICAL: (0.793, 1.456),
}


@dataclass(frozen=True)
class ShapeSpec:
    """A graspable object: kind plus uniform scale factor."""

    kind: ShapeKind
    scale: float = 1.0

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError(f"scale must be positive, got {self.scale}")

    @property
    def category(self) -> ShapeCategory:
        return KIND_TO_CATEGORY[self.kind]

    @property
    def nominal_width_mm(self) -> float:
        return NOMINAL_WIDTH_MM

    def to_json(self) -> dict:
        return {"kind": self.kind.value, "scale": self.scale,
                "category": self.category.value}

    @staticmethod
    def from_json(d: dict) -> "ShapeSpec":
        return ShapeSpec(kind=ShapeKind(d["kind"]), scale=float(d["scale"]))


class BoundaryPolyline:
    """Closed simple CCW polyline; last vertex connects back to the first."""

    def __init__(self, vertices: np.ndarray):
        v = np.asarray(vertices, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 8:
            raise ValueError("polyline needs at least 8 (x, y) vertices")
        if _signed_area(v) <= 0:
            raise ValueError("polyline must wind counter-clockwise")
        self.vertices = v
        self.vertices.setflags(write=False)
        # Precomputed per-segment quantities for distance queries.
        self._a = v
        self._b = np.roll(v, -1, axis=0)
        self._e = self._b - self._a
        self._ee = np.maximum(np.einsum("ij,ij->i", self._e, self._e), 1e-30)
        # Outward edge normals for a CCW polygon: interior lies to the left.
        self._edge_normal = np.stack([self._e[:, 1], -self._e[:, 0]], axis=1)
        self._edge_normal /= np.linalg.norm(self._edge_normal, axis=1, keepdims=True)
        self.bounding_radius = float(np.sqrt((v ** 2).sum(axis=1).max()))

    def __len__(self) -> int:
        return len(self.vertices)

    def area(self) -> float:
        return _signed_area(self.vertices)

    def centroid(self) -> np.ndarray:
        return _area_centroid(self.vertices)

    def max_width(self) -> float:
        """Maximal pairwise vertex distance (the cross-section width)."""
        v = self.vertices
        d2 = np.sum((v[:, None, :] - v[None, :, :]) ** 2, axis=-1)
        return float(np.sqrt(d2.max()))

    def signed_distance_batch(self, points: np.ndarray):
        """Signed distance of many query points at once.

        Returns (dist, closest, normal, at_vertex): dist is negative inside;
        normal is the unit direction of increasing distance (the outward
        normal at the closest boundary point); at_vertex marks queries whose
        closest feature is a polygon vertex rather than a segment interior
        (where the distance field is curved instead of locally linear).
        """
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))  # (K, 2)
        w = p[:, None, :] - self._a[None, :, :]                  # (K, M, 2)
        t = np.einsum("kmj,mj->km", w, self._e) / self._ee
        clamped = (t <= 0.0) | (t >= 1.0)
        np.clip(t, 0.0, 1.0, out=t)
        cp = self._a[None, :, :] + t[:, :, None] * self._e[None, :, :]
        diff = p[:, None, :] - cp
        d2 = np.einsum("kmj,kmj->km", diff, diff)
        imin = np.argmin(d2, axis=1)
        k = np.arange(len(p))
        closest = cp[k, imin]
        dist = np.sqrt(d2[k, imin])
        at_vertex = clamped[k, imin]

        inside = self._contains(p)
        sign = np.where(inside, -1.0, 1.0)
        sdist = sign * dist

        normal = p - closest
        degenerate = dist < 1e-9
        safe = np.where(degenerate, 1.0, sdist)
        normal = normal / safe[:, None]
        if np.any(degenerate):
            normal[degenerate] = self._edge_normal[imin[degenerate]]
            at_vertex[degenerate] = False
        return sdist, closest, normal, at_vertex

    def _contains(self, p: np.ndarray) -> np.ndarray:
        """Even-odd crossing test, vectorized over query points."""
        x, y = p[:, 0][:, None], p[:, 1][:, None]
        ay, by = self._a[:, 1][None, :], self._b[:, 1][None, :]
        ax, bx = self._a[:, 0][None, :], self._b[:, 0][None, :]
        straddles = (ay > y) != (by > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = ax + (y - ay) * (bx - ax) / (by - ay)
        crossings = straddles & (x < xint)
        return crossings.sum(axis=1) % 2 == 1


def support_and_normal(poly: BoundaryPolyline, point) -> tuple[np.ndarray, np.ndarray, float]:
    """Closest boundary point, outward unit normal, and signed distance."""
    d, cp, n, _ = poly.signed_distance_batch(np.asarray(point, dtype=np.float64)[None, :])
    return cp[0], n[0], float(d[0])


def _signed_area(v: np.ndarray) -> float:
    x, y = v[:, 0], v[:, 1]
    x1, y1 = np.roll(x, -1), np.roll(y, -1)
    return float(0.5 * np.sum(x * y1 - x1 * y))


def _area_centroid(v: np.ndarray) -> np.ndarray:
    x, y = v[:, 0], v[:, 1]
    x1, y1 = np.roll(x, -1), np.roll(y, -1)
    cross = x * y1 - x1 * y
    a = 0.5 * cross.sum()
    cx = np.sum((x + x1) * cross) / (6 * a)
    cy = np.sum((y + y1) * cross) / (6 * a)
    return np.array([cx, cy])


def _subdivide(corners: np.ndarray, per_edge: int) -> np.ndarray:
    """Insert evenly spaced interior points on every edge, keeping corners exact."""
    pts = []
    n = len(corners)
    for i in range(n):
        a, b = corners[i], corners[(i + 1) % n]
        pts.append(a)
        for j in range(1, per_edge):
            pts.append(a + (b - a) * (j / per_edge))
    return np.array(pts)


def _catmull_rom_closed(control: np.ndarray, samples: int) -> np.ndarray:
    """Sample a closed Catmull-Rom spline (a chain of cubic Bezier segments)."""
    n = len(control)
    per_seg = max(samples // n, 2)
    pts = []
    for i in range(n):
        p0 = control[(i - 1) % n]
        p1 = control[i]
        p2 = control[(i + 1) % n]
        p3 = control[(i + 2) % n]
        t = np.linspace(0.0, 1.0, per_seg, endpoint=False)[:, None]
        pts.append(
            0.5 * ((2 * p1)
                   + (-p0 + p2) * t
                   + (2 * p0 - 5 * p1 + 4 * p2 - p3) * t ** 2
                   + (-p0 + 3 * p1 - 3 * p2 + p3) * t ** 3)
        )
    return np.vstack(pts)


def _normalized(vertices: np.ndarray) -> np.ndarray:
    """Center at the area centroid and rescale to the nominal max width."""
    v = vertices - _area_centroid(vertices)
    d2 = np.sum((v[:, None, :] - v[None, :, :]) ** 2, axis=-1)
    width = math.sqrt(d2.max())
    return v * (NOMINAL_WIDTH_MM / width)


def _circle_vertices(r: float, n: int = CURVE_VERTICES) -> np.ndarray:
    th = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    return np.stack([r * np.cos(th), r * np.sin(th)], axis=1)


def _nominal_vertices(kind: ShapeKind) -> np.ndarray:
    r = NOMINAL_WIDTH_MM / 2.0
    if kind == ShapeKind.CIRCLE:
        return _circle_vertices(r)
    if kind == ShapeKind.ELLIPSE:
        th = np.linspace(0.0, 2 * np.pi, CURVE_VERTICES, endpoint=False)
        return np.stack([r * np.cos(th), 0.6 * r * np.sin(th)], axis=1)
    if kind == ShapeKind.SQUARE:
        half = NOMINAL_WIDTH_MM / (2.0 * math.sqrt(2.0))  # diagonal == nominal width
        corners = np.array([[half, -half], [half, half], [-half, half], [-half, -half]])
        return _subdivide(corners, 4)
    if kind == ShapeKind.HEXAGON:
        th = np.arange(6) * (np.pi / 3.0)
        corners = np.stack([r * np.cos(th), r * np.sin(th)], axis=1)
        return _subdivide(corners, 4)
    if kind == ShapeKind.STAR:
        outer, inner = r, 0.45 * r
        th = np.arange(10) * (np.pi / 5.0) + np.pi / 2.0
        rad = np.where(np.arange(10) % 2 == 0, outer, inner)
        corners = np.stack([rad * np.cos(th), rad * np.sin(th)], axis=1)
        return _normalized(_subdivide(corners, 4))
    if kind == ShapeKind.HALF_CIRCLE:
        th = np.linspace(0.0, np.pi, 97)
        arc = np.stack([r * np.cos(th), r * np.sin(th)], axis=1)
        chord_x = np.linspace(-r, r, 33)[1:-1]
        chord = np.stack([chord_x, np.zeros_like(chord_x)], axis=1)
        v = np.vstack([arc, chord])
        return v - _area_centroid(v)
    if kind == ShapeKind.ARBITRARY_CURVED:
        # Fixed smooth non-convex blob: spline through radial control points.
        radii = np.array([20, 12, 17, 9, 16, 13, 18, 11], dtype=float)
        th = np.arange(8) * (np.pi / 4.0)
        control = np.stack([radii * np.cos(th), radii * np.sin(th)], axis=1)
        return _normalized(_catmull_rom_closed(control, CURVE_VERTICES))
    if kind == ShapeKind.IRREGULAR_DUCK:
        # Non-convex silhouette: rounded body with a single neck-and-head
        # protrusion, replacing the rubber duck of the physical object set.
        control = np.array([
            [20.0, -2.0], [17.0, 7.0], [8.0, 11.0], [0.0, 12.0],
            [-6.0, 9.5], [-8.5, 13.0], [-15.0, 17.0], [-20.0, 12.0],
            [-17.5, 5.0], [-12.0, 2.0], [-14.0, -6.0], [-7.0, -11.0],
            [4.0, -12.0], [14.0, -9.0],
        ])
        return _normalized(_catmull_rom_closed(control, CURVE_VERTICES))
    raise ValueError(f"unknown shape kind {kind}")


_NOMINAL_CACHE: dict[ShapeKind, np.ndarray] = {}


def make_shape(kind: ShapeKind, scale: float = 1.0) -> BoundaryPolyline:
    """Discretized boundary of `kind`, uniformly scaled about the centroid."""
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    if kind not in _NOMINAL_CACHE:
        _NOMINAL_CACHE[kind] = _nominal_vertices(kind)
    return BoundaryPolyline(_NOMINAL_CACHE[kind] * scale)


def category_sample(category: ShapeCategory, rng: np.random.Generator) -> ShapeSpec:
    """Draw a scaled variant of the category's base shape.

    Scale is uniform over the category's benchmark interval (fraction of the
    nominal training size).
    """
    if category not in CATEGORY_SCALE_RANGES:
        raise ValueError(f"cannot sample category {category}")
    lo, hi = CATEGORY_SCALE_RANGES[category]
    return ShapeSpec(kind=CATEGORY_TO_BASE_KIND[category],
                     scale=float(rng.uniform(lo, hi)))
