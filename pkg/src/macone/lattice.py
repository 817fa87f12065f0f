"""Lattice discretization of a convex domain.

The lattice is offset + h*Z^2 restricted to the open domain. Points are
ordered lexicographically by coordinates; one distinguished point carries the
pinned value. Values at exterior lattice points are defined by the cone
extension: the minimum over boundary lattice points y of
max_j (z - y) . a_j + v(y), where a_j runs over the target polygon vertices.
The boundary point achieving the minimum (smallest index on ties) is the
selection Gamma(z).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import (ConvexPolygon, Halfplane, clip_halfplane, contains,
                       edge_halfplanes)


class LatticeError(ValueError):
    pass


class StencilError(ValueError):
    pass


@dataclass(frozen=True)
class Lattice:
    domain: ConvexPolygon
    h: float
    offset: tuple[float, float]
    coords: np.ndarray       # (M+1, 2) int64 lattice multi-indices
    points: np.ndarray       # (M+1, 2) float, offset + h * coords
    is_boundary: np.ndarray  # (M+1,) bool
    pinned: int              # index of the pinned point
    grid: np.ndarray         # dense occupancy map, value = point index or -1
    grid_origin: np.ndarray  # (2,) int64, coords of grid[0, 0]

    @property
    def n_points(self) -> int:
        return len(self.points)

    def lookup(self, c1: int, c2: int) -> int:
        """Index of the lattice point with multi-index (c1, c2), or -1."""
        i = c1 - self.grid_origin[0]
        j = c2 - self.grid_origin[1]
        if 0 <= i < self.grid.shape[0] and 0 <= j < self.grid.shape[1]:
            return int(self.grid[i, j])
        return -1


def _strictly_inside(domain: ConvexPolygon, pts: np.ndarray) -> np.ndarray:
    """Open containment; points on the boundary are excluded."""
    inside = np.ones(len(pts), dtype=bool)
    scale = float(np.max(np.abs(domain.vertices))) + 1.0
    eps = 1e-12 * scale
    for hp in edge_halfplanes(domain, normalize=True):
        inside &= pts[:, 0] * hp.normal[0] + pts[:, 1] * hp.normal[1] < hp.offset - eps
    return inside


def build_lattice(domain: ConvexPolygon, h: float, offset=(0.0, 0.0),
                  pin_location=None) -> Lattice:
    """Enumerate offset + h*Z^2 inside the open domain, lexicographic order."""
    if h <= 0:
        raise LatticeError("mesh length must be positive")
    v = domain.vertices
    lo = v.min(axis=0)
    hi = v.max(axis=0)
    c_lo = [int(math.floor((lo[k] - offset[k]) / h)) - 1 for k in range(2)]
    c_hi = [int(math.ceil((hi[k] - offset[k]) / h)) + 1 for k in range(2)]
    ii, jj = np.meshgrid(np.arange(c_lo[0], c_hi[0] + 1),
                         np.arange(c_lo[1], c_hi[1] + 1), indexing="ij")
    coords = np.stack([ii.ravel(), jj.ravel()], axis=1).astype(np.int64)
    pts = offset + h * coords.astype(float)
    keep = _strictly_inside(domain, pts)
    coords = coords[keep]
    pts = pts[keep]
    if len(pts) < 2:
        raise LatticeError(f"lattice has {len(pts)} points; need at least 2")
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    coords = coords[order]
    pts = pts[order]

    origin = coords.min(axis=0)
    span = coords.max(axis=0) - origin + 1
    grid = np.full((span[0], span[1]), -1, dtype=np.int64)
    grid[coords[:, 0] - origin[0], coords[:, 1] - origin[1]] = np.arange(len(pts))

    # Boundary points: some canonical neighbor is missing.
    is_boundary = np.zeros(len(pts), dtype=bool)
    for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        ni = coords[:, 0] + dx - origin[0]
        nj = coords[:, 1] + dy - origin[1]
        ok = (ni >= 0) & (ni < span[0]) & (nj >= 0) & (nj < span[1])
        nb = np.full(len(pts), -1, dtype=np.int64)
        nb[ok] = grid[ni[ok], nj[ok]]
        is_boundary |= nb < 0

    if pin_location is None:
        pin_location = (offset[0] + h, offset[1] + h)
    d2 = np.sum((pts - np.asarray(pin_location, dtype=float)) ** 2, axis=1)
    pinned = int(np.argmin(d2))

    return Lattice(domain, float(h), (float(offset[0]), float(offset[1])),
                   coords, pts, is_boundary, pinned, grid, origin)


@dataclass(frozen=True)
class Stencil:
    directions: np.ndarray  # (nV, 2) int64, sorted by angle
    norms: np.ndarray       # (nV,) Euclidean lengths
    canonical: np.ndarray   # positions of (1,0), (-1,0), (0,1), (0,-1)
    opposite: np.ndarray    # (nV,) position of -e for each e

    @property
    def n_dirs(self) -> int:
        return len(self.directions)

    def position(self, e) -> int:
        hit = np.nonzero((self.directions[:, 0] == e[0]) & (self.directions[:, 1] == e[1]))[0]
        if len(hit) == 0:
            raise StencilError(f"direction {tuple(e)} not in stencil")
        return int(hit[0])


def build_stencil(generators, target: ConvexPolygon | None = None,
                  tol: float = 1e-12) -> Stencil:
    """Validate and symmetrize stencil generators.

    Each generator must be a nonzero integer vector with coprime entries. The
    symmetrized set must contain the canonical basis directions and, when a
    target polygon is supplied, a normal to each of its edges.
    """
    dirs = set()
    for g in generators:
        e = (int(g[0]), int(g[1]))
        if e[0] != g[0] or e[1] != g[1]:
            raise StencilError(f"non-integer stencil generator {tuple(g)}")
        if e == (0, 0):
            raise StencilError("zero vector in stencil generators")
        if math.gcd(abs(e[0]), abs(e[1])) != 1:
            raise StencilError(f"direction {e} has non-coprime entries")
        dirs.add(e)
        dirs.add((-e[0], -e[1]))
    for e in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        if e not in dirs:
            raise StencilError(f"stencil misses canonical direction {e}")
    arr = np.array(sorted(dirs, key=lambda e: math.atan2(e[1], e[0])), dtype=np.int64)
    if target is not None:
        v = target.vertices
        for i in range(len(v)):
            d = v[(i + 1) % len(v)] - v[i]
            dots = np.abs(arr[:, 0] * d[0] + arr[:, 1] * d[1])
            scale = np.hypot(d[0], d[1]) * np.hypot(arr[:, 0], arr[:, 1])
            if not np.any(dots <= tol * scale):
                raise StencilError(f"no stencil direction is normal to target edge {i}")
    norms = np.sqrt((arr.astype(float) ** 2).sum(axis=1))
    canonical = np.array([
        int(np.nonzero((arr[:, 0] == dx) & (arr[:, 1] == dy))[0][0])
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1))
    ])
    opposite = np.array([
        int(np.nonzero((arr[:, 0] == -e[0]) & (arr[:, 1] == -e[1]))[0][0]) for e in arr
    ])
    return Stencil(arr, norms, canonical, opposite)


def partition_cells(lat: Lattice) -> list[ConvexPolygon]:
    """Cells C_x partitioning the domain, one per lattice point.

    Cuts run along midlines between consecutive occupied lattice columns and,
    within each column, between consecutive rows; extreme cells extend to the
    domain boundary so leftover area joins the nearest cell and the areas sum
    to the domain area.
    """
    h, off = lat.h, lat.offset
    cols = np.unique(lat.coords[:, 0])
    col_cut = {}
    for a, b in zip(cols[:-1], cols[1:]):
        col_cut[(int(a), int(b))] = off[0] + h * 0.5 * (a + b)
    cells: list[ConvexPolygon] = [None] * lat.n_points  # type: ignore[list-item]
    for ci, c in enumerate(cols):
        mask = lat.coords[:, 0] == c
        idx = np.nonzero(mask)[0]
        rows = lat.coords[idx, 1]
        ord_r = np.argsort(rows)
        idx, rows = idx[ord_r], rows[ord_r]
        xlo = col_cut.get((int(cols[ci - 1]), int(c))) if ci > 0 else None
        xhi = col_cut.get((int(c), int(cols[ci + 1]))) if ci + 1 < len(cols) else None
        for k, (i, r) in enumerate(zip(idx, rows)):
            ylo = off[1] + h * 0.5 * (rows[k - 1] + r) if k > 0 else None
            yhi = off[1] + h * 0.5 * (r + rows[k + 1]) if k + 1 < len(rows) else None
            cell = lat.domain
            if xlo is not None:
                cell = clip_halfplane(cell, Halfplane((-1.0, 0.0), -xlo))
            if xhi is not None:
                cell = clip_halfplane(cell, Halfplane((1.0, 0.0), xhi))
            if ylo is not None:
                cell = clip_halfplane(cell, Halfplane((0.0, -1.0), -ylo))
            if yhi is not None:
                cell = clip_halfplane(cell, Halfplane((0.0, 1.0), yhi))
            cells[i] = cell
    return cells


def closure_points(lat: Lattice, tol: float = 1e-9):
    """Mesh points of the closed domain, paired with their lattice indices.

    Returns (points, index) where index[k] is the open-domain lattice index
    of points[k], or -1 for mesh points that lie on the domain boundary and
    therefore carry no unknown.
    """
    verts = lat.domain.vertices
    lo = np.floor((verts.min(axis=0) - lat.offset) / lat.h).astype(np.int64) - 1
    hi = np.ceil((verts.max(axis=0) - lat.offset) / lat.h).astype(np.int64) + 1
    ii, jj = np.meshgrid(np.arange(lo[0], hi[0] + 1),
                         np.arange(lo[1], hi[1] + 1), indexing="ij")
    coords = np.column_stack([ii.ravel(), jj.ravel()])
    pts = lat.offset + lat.h * coords.astype(float)
    keep = contains(lat.domain, pts, tol=tol)
    coords, pts = coords[keep], pts[keep]
    idx = np.fromiter((lat.lookup(int(a), int(b)) for a, b in coords),
                      dtype=np.int64, count=len(coords))
    return pts, idx


class ExtensionBatch:
    """Vectorized cone-extension evaluation for many exterior points at once."""

    def __init__(self, lat: Lattice, target: ConvexPolygon):
        self.lat = lat
        self.boundary_idx = np.flatnonzero(lat.is_boundary)  # ascending point index
        self.boundary_pts = lat.points[self.boundary_idx]
        self.apex = np.asarray(target.vertices, dtype=float)
        self.tie_tol = 1e-12

    def __call__(self, values: np.ndarray, zpts: np.ndarray, chunk: int = 512):
        """Extension values, Gamma point indices and tie count for points zpts."""
        zpts = np.asarray(zpts, dtype=float).reshape(-1, 2)
        nz = len(zpts)
        vals = np.empty(nz)
        gam = np.empty(nz, dtype=np.int64)
        ties = 0
        vb = values[self.boundary_idx]
        for s in range(0, nz, chunk):
            zc = zpts[s:s + chunk]
            diff = zc[:, None, :] - self.boundary_pts[None, :, :]
            cone = np.einsum("kbd,jd->kbj", diff, self.apex).max(axis=2)
            total = cone + vb[None, :]
            g = np.argmin(total, axis=1)
            best = total[np.arange(len(zc)), g]
            vals[s:s + chunk] = best
            gam[s:s + chunk] = self.boundary_idx[g]
            tol = self.tie_tol * (1.0 + np.abs(best))
            ties += int(np.sum(np.sum(total <= (best + tol)[:, None], axis=1) > 1))
        return vals, gam, ties


def extend_value(lat: Lattice, target: ConvexPolygon, values: np.ndarray,
                 z_coord) -> tuple[float, int]:
    """Cone extension at one exterior lattice point given by its multi-index.

    Returns (value, Gamma index); ties pick the smallest boundary point index.
    """
    c1, c2 = int(z_coord[0]), int(z_coord[1])
    if lat.lookup(c1, c2) >= 0:
        raise ValueError(f"{(c1, c2)} is an interior lattice point")
    z = np.array([lat.offset[0] + lat.h * c1, lat.offset[1] + lat.h * c2])
    apex = target.vertices
    best = math.inf
    best_idx = -1
    for b in np.flatnonzero(lat.is_boundary):
        y = lat.points[b]
        cone = max(float((z[0] - y[0]) * a[0] + (z[1] - y[1]) * a[1]) for a in apex)
        cand = cone + float(values[b])
        if cand < best:
            best = cand
            best_idx = int(b)
    return best, best_idx


def neighbor_value(lat: Lattice, target: ConvexPolygon, values: np.ndarray,
                   i: int, e) -> tuple[float, int]:
    """Value of v at x_i + h*e: direct lookup inside, cone extension outside.

    Returns (value, index) where index is the lattice point supplying the
    value (the neighbor itself or its Gamma selection).
    """
    c1 = int(lat.coords[i, 0] + e[0])
    c2 = int(lat.coords[i, 1] + e[1])
    j = lat.lookup(c1, c2)
    if j >= 0:
        return float(values[j]), j
    return extend_value(lat, target, values, (c1, c2))
