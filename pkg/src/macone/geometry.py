"""Planar convex polygon primitives.

Polygons are vertex lists in counterclockwise order; a polygon with fewer
than three vertices is canonically empty and has area zero. All operations
are pure functions of immutable inputs. A single relative tolerance TOL,
scaled by the magnitude of the quantity being compared, is used for vertex
deduplication, halfplane membership and facet activity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TOL = 1e-10


@dataclass(frozen=True)
class Halfplane:
    """Closed halfplane {p : normal . p <= offset}. The normal need not be unit."""

    normal: tuple[float, float]
    offset: float


@dataclass(frozen=True)
class Segment:
    a: tuple[float, float]
    b: tuple[float, float]

    def length(self) -> float:
        return float(np.hypot(self.b[0] - self.a[0], self.b[1] - self.a[1]))


@dataclass(frozen=True)
class ConvexPolygon:
    """Vertices as an (n, 2) float array, counterclockwise order."""

    vertices: np.ndarray

    @property
    def is_empty(self) -> bool:
        return len(self.vertices) < 3


def _close(ax, ay, bx, by, tol):
    # Relative vertex coincidence test; the kernel mirrors this formula.
    m = tol * (1.0 + max(abs(ax), abs(ay), abs(bx), abs(by)))
    return abs(ax - bx) <= m and abs(ay - by) <= m


def polygon(vertices, tol: float = TOL) -> ConvexPolygon:
    """Build a polygon, deduplicating cyclically-consecutive coincident vertices."""
    arr = np.asarray(vertices, dtype=float).reshape(-1, 2)
    if len(arr) == 0:
        return ConvexPolygon(arr)
    kept = [arr[0]]
    for p in arr[1:]:
        q = kept[-1]
        if not _close(p[0], p[1], q[0], q[1], tol):
            kept.append(p)
    if len(kept) > 1 and _close(kept[-1][0], kept[-1][1], kept[0][0], kept[0][1], tol):
        kept.pop()
    return ConvexPolygon(np.array(kept, dtype=float))


EMPTY = ConvexPolygon(np.zeros((0, 2)))


def area(poly: ConvexPolygon) -> float:
    """Shoelace area; zero for empty/degenerate polygons, never negative."""
    v = poly.vertices
    if len(v) < 3:
        return 0.0
    x, y = v[:, 0], v[:, 1]
    s = 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))
    return max(s, 0.0)


def centroid(poly: ConvexPolygon) -> np.ndarray:
    """Area centroid; falls back to the vertex mean for degenerate polygons."""
    v = poly.vertices
    if len(v) == 0:
        raise ValueError("centroid of an empty vertex list")
    x, y = v[:, 0], v[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a2 = float(np.sum(cross))
    scale = float(np.max(np.abs(v))) + 1.0
    if len(v) < 3 or a2 <= TOL * scale * scale:
        return v.mean(axis=0)
    cx = float(np.sum((x + xn) * cross)) / (3.0 * a2)
    cy = float(np.sum((y + yn) * cross)) / (3.0 * a2)
    return np.array([cx, cy])


def clip_halfplane(poly: ConvexPolygon, hp: Halfplane, tol: float = TOL) -> ConvexPolygon:
    """Sutherland-Hodgman clip of a convex polygon by one closed halfplane.

    Vertices with normal . p - offset <= tol*(1+|offset|) are kept as inside;
    crossing edges contribute the interpolated boundary point.
    """
    v = poly.vertices
    n = len(v)
    if n == 0:
        return poly
    nx, ny = hp.normal
    c = hp.offset
    eps = tol * (1.0 + abs(c))
    d = v[:, 0] * nx + v[:, 1] * ny - c
    inside = d <= eps
    if inside.all():
        return poly
    if not inside.any():
        return EMPTY
    out = []
    for i in range(n):
        j = i + 1 if i + 1 < n else 0
        if inside[i]:
            out.append((v[i, 0], v[i, 1]))
        if inside[i] != inside[j]:
            t = d[i] / (d[i] - d[j])
            out.append((v[i, 0] + t * (v[j, 0] - v[i, 0]),
                        v[i, 1] + t * (v[j, 1] - v[i, 1])))
    return polygon(out, tol)


def intersect_halfplanes(halfplanes, box: ConvexPolygon, tol: float = TOL) -> ConvexPolygon:
    """Intersect halfplanes in the given order, starting from a bounding polygon."""
    poly = box
    for hp in halfplanes:
        poly = clip_halfplane(poly, hp, tol)
        if len(poly.vertices) == 0:
            break
    return poly


def triangulate_fan(poly: ConvexPolygon) -> np.ndarray:
    """Fan triangulation from the centroid, shape (n, 3, 2). Empty -> (0, 3, 2)."""
    v = poly.vertices
    if len(v) < 3:
        return np.zeros((0, 3, 2))
    c = centroid(poly)
    n = len(v)
    tris = np.empty((n, 3, 2))
    tris[:, 0] = c
    tris[:, 1] = v
    tris[:, 2] = np.roll(v, -1, axis=0)
    return tris


def facet_segment(poly: ConvexPolygon, hp: Halfplane, tol: float = TOL) -> Segment | None:
    """Maximal portion of the boundary lying on normal . p = offset, or None.

    Collinear runs are merged by taking the extreme active vertices along the
    facet direction; a single touching vertex does not count as a facet.
    """
    v = poly.vertices
    if len(v) == 0:
        return None
    nx, ny = hp.normal
    c = hp.offset
    eps = tol * (1.0 + abs(c))
    d = v[:, 0] * nx + v[:, 1] * ny - c
    active = np.abs(d) <= eps
    if np.count_nonzero(active) < 2:
        return None
    pts = v[active]
    t = pts[:, 0] * (-ny) + pts[:, 1] * nx
    a = pts[int(np.argmin(t))]
    b = pts[int(np.argmax(t))]
    if _close(a[0], a[1], b[0], b[1], tol):
        return None
    return Segment((float(a[0]), float(a[1])), (float(b[0]), float(b[1])))


def edge_halfplanes(poly: ConvexPolygon, normalize: bool = False) -> list[Halfplane]:
    """Outward edge halfplanes of a CCW polygon; unit normals if normalize."""
    v = poly.vertices
    hps = []
    for i in range(len(v)):
        j = i + 1 if i + 1 < len(v) else 0
        ex, ey = v[j] - v[i]
        nx, ny = ey, -ex
        if normalize:
            ln = float(np.hypot(nx, ny))
            nx, ny = nx / ln, ny / ln
        hps.append(Halfplane((float(nx), float(ny)), float(nx * v[i, 0] + ny * v[i, 1])))
    return hps


def contains(poly: ConvexPolygon, pts, tol: float = TOL) -> np.ndarray:
    """Vectorized closed containment test for points against a CCW polygon."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    inside = np.ones(len(pts), dtype=bool)
    for hp in edge_halfplanes(poly):
        nx, ny = hp.normal
        eps = tol * (1.0 + abs(hp.offset))
        inside &= pts[:, 0] * nx + pts[:, 1] * ny - hp.offset <= eps
    return inside


def boundary_distance(poly: ConvexPolygon, p) -> float:
    """Distance from an interior point to the polygon boundary."""
    p = np.asarray(p, dtype=float)
    dists = []
    for hp in edge_halfplanes(poly, normalize=True):
        dists.append(hp.offset - (hp.normal[0] * p[0] + hp.normal[1] * p[1]))
    return float(min(dists))


def validate_ccw(poly: ConvexPolygon, tol: float = TOL) -> bool:
    """Check counterclockwise convex ordering up to tolerance."""
    v = poly.vertices
    if len(v) < 3:
        return True
    scale = float(np.max(np.abs(v))) + 1.0
    e = np.roll(v, -1, axis=0) - v
    cross = e[:, 0] * np.roll(e[:, 1], -1) - e[:, 1] * np.roll(e[:, 0], -1)
    return bool(np.all(cross > -tol * scale * scale))
