"""Quadrature rules over triangles, segments and convex polygons.

Triangle rules are stored in barycentric coordinates with weights summing to
one (so the cell area multiplies the weighted node average). Segment rules
live on [-1, 1] with weights summing to two, the Gauss-Legendre convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss

from .geometry import ConvexPolygon, Segment, triangulate_fan


@dataclass(frozen=True)
class TriangleRule:
    name: str
    degree: int
    barycentric: np.ndarray  # (nq, 3)
    weights: np.ndarray      # (nq,), sums to 1


@dataclass(frozen=True)
class SegmentRule:
    name: str
    degree: int
    nodes: np.ndarray    # (nq,) in [-1, 1]
    weights: np.ndarray  # (nq,), sums to 2


# Midpoints of the edges, exact through degree 2. This is the rule used for
# the right hand side cells.
TRIANGLE_MIDPOINT = TriangleRule(
    "midpoint-edges", 2,
    np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]]),
    np.array([1.0, 1.0, 1.0]) / 3.0,
)

# Classic 6-point degree-4 rule.
_d4a, _d4b = 0.816847572980459, 0.091576213509771
_d4c, _d4d = 0.108103018168070, 0.445948490915965
_d4w1, _d4w2 = 0.109951743655322, 0.223381589678011
TRIANGLE_DEGREE4 = TriangleRule(
    "dunavant-4", 4,
    np.array([
        [_d4a, _d4b, _d4b], [_d4b, _d4a, _d4b], [_d4b, _d4b, _d4a],
        [_d4c, _d4d, _d4d], [_d4d, _d4c, _d4d], [_d4d, _d4d, _d4c],
    ]),
    np.array([_d4w1, _d4w1, _d4w1, _d4w2, _d4w2, _d4w2]),
)


def gauss_triangle_rule(degree: int) -> TriangleRule:
    """Product Gauss rule on the triangle, exact through the given degree.

    Collapsed-square construction: x = u, y = v(1-u) maps the unit square
    to the reference triangle with Jacobian (1-u), so a monomial x^a y^b
    with a + b <= degree becomes a polynomial of degree a + b + 1 in u and
    b in v; one-dimensional Gauss-Legendre rules of matching precision make
    the product rule exact. Weights are normalized to sum to 1.
    """
    n = (degree + 3) // 2
    xu, wu = leggauss(n)
    xv, wv = leggauss(n)
    u = 0.5 * (xu + 1.0)
    v = 0.5 * (xv + 1.0)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    ww = np.outer(wu, wv) * 0.25 * (1.0 - uu)
    x = uu.ravel()
    y = (vv * (1.0 - uu)).ravel()
    bary = np.column_stack([1.0 - x - y, x, y])
    return TriangleRule(f"gauss-duffy-{degree}", degree, bary,
                        2.0 * ww.ravel())


# Used for the cone-measure polygons: the measure feeds the residual whose
# finite differences must match the facet-integral Jacobian, so its
# truncation error has to sit far below the derivative check tolerance even
# on the coarse meshes the check runs at.
TRIANGLE_DEGREE8 = gauss_triangle_rule(8)

TRIANGLE_RULES = {r.name: r for r in
                  (TRIANGLE_MIDPOINT, TRIANGLE_DEGREE4, TRIANGLE_DEGREE8)}


def gauss_segment_rule(npoints: int) -> SegmentRule:
    """Gauss-Legendre rule on [-1, 1], exact through degree 2*npoints - 1."""
    x, w = leggauss(npoints)
    return SegmentRule(f"gauss-{npoints}", 2 * npoints - 1, x, w)


# Facet integrals use four Gauss points, degree of precision 7.
SEGMENT_GAUSS4 = gauss_segment_rule(4)


@dataclass(frozen=True)
class Density:
    """Integrable density; fn maps an (n, 2) point array to (n,) values."""

    fn: Callable[[np.ndarray], np.ndarray]
    name: str = ""

    def __call__(self, pts) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(pts, dtype=float)), dtype=float)


def constant_density(value: float = 1.0, name: str = "const") -> Density:
    return Density(lambda p: np.full(len(p), float(value)), name)


def triangle_nodes(tris: np.ndarray, rule: TriangleRule):
    """Map a rule onto triangles (T, 3, 2) -> nodes (T, nq, 2), weights (T, nq)."""
    tris = np.asarray(tris, dtype=float).reshape(-1, 3, 2)
    b = rule.barycentric
    nodes = np.einsum("qk,tkd->tqd", b, tris)
    e1 = tris[:, 1] - tris[:, 0]
    e2 = tris[:, 2] - tris[:, 0]
    areas = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    weights = areas[:, None] * rule.weights[None, :]
    return nodes, weights


def refine_triangles(tris: np.ndarray, levels: int) -> np.ndarray:
    """Uniform 4-way midpoint subdivision, applied `levels` times."""
    tris = np.asarray(tris, dtype=float).reshape(-1, 3, 2)
    for _ in range(levels):
        a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
        ab, bc, ca = 0.5 * (a + b), 0.5 * (b + c), 0.5 * (c + a)
        tris = np.concatenate([
            np.stack([a, ab, ca], axis=1),
            np.stack([ab, b, bc], axis=1),
            np.stack([ca, bc, c], axis=1),
            np.stack([ab, bc, ca], axis=1),
        ])
    return tris


def integrate_triangles(tris: np.ndarray, density: Density, rule: TriangleRule) -> float:
    nodes, weights = triangle_nodes(tris, rule)
    if nodes.size == 0:
        return 0.0
    vals = density(nodes.reshape(-1, 2)).reshape(weights.shape)
    return float(np.sum(weights * vals))


def integrate_polygon(poly: ConvexPolygon, density: Density,
                      rule: TriangleRule = TRIANGLE_MIDPOINT, refine: int = 0) -> float:
    """Integrate a density over a convex polygon via centroid-fan triangulation."""
    tris = triangulate_fan(poly)
    if refine:
        tris = refine_triangles(tris, refine)
    return integrate_triangles(tris, density, rule)


def integrate_cell(cell: ConvexPolygon, density: Density,
                   rule: TriangleRule = TRIANGLE_MIDPOINT, refine: int = 0) -> float:
    """Right-hand-side cell integral; same machinery as integrate_polygon."""
    return integrate_polygon(cell, density, rule, refine)


def segment_nodes(a: np.ndarray, b: np.ndarray, rule: SegmentRule):
    """Map a segment rule onto segments a, b of shape (..., 2)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    t = rule.nodes
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    nodes = mid[..., None, :] + t[:, None] * half[..., None, :]
    length = np.sqrt(np.sum((b - a) ** 2, axis=-1))
    weights = 0.5 * length[..., None] * rule.weights
    return nodes, weights


def integrate_segment(seg: Segment, density: Density,
                      rule: SegmentRule = SEGMENT_GAUSS4) -> float:
    """Line integral of a density along a segment (arclength measure)."""
    nodes, weights = segment_nodes(np.asarray(seg.a), np.asarray(seg.b), rule)
    vals = density(nodes.reshape(-1, 2)).reshape(weights.shape)
    return float(np.sum(weights * vals))
