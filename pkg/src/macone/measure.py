"""Discrete Monge-Ampere measure of mesh functions and its derivatives.

For a mesh function v the difference quotients lam_e = (v(x + h e) - v(x))/h
over the stencil define the polygon Q(lam) = {p : p . e <= lam_e for all e};
exterior neighbor values come from the cone extension. The measure at a point
is the integral of the density over Q(lam). The residual subtracts the cell
masses mu_i, and the Jacobian rows follow from the facet integrals: the
derivative of the measure with respect to lam_e is the facet integral divided
by |e|, and each lam_e depends on v at the neighbor (or its Gamma selection)
with weight 1/h and on v at the point itself with weight -1/h.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import _kernel
from .geometry import (EMPTY, ConvexPolygon, Halfplane, edge_halfplanes,
                       intersect_halfplanes, polygon)
from .lattice import ExtensionBatch, Lattice, Stencil, neighbor_value
from .quadrature import (SEGMENT_GAUSS4, TRIANGLE_DEGREE8, Density,
                         SegmentRule, TriangleRule, integrate_polygon)


class MeasureError(RuntimeError):
    pass


@dataclass
class MeshFunction:
    """Values attached to the lattice points, one per point."""

    lattice: Lattice
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.lattice.n_points,):
            raise ValueError("values shape does not match lattice")

    @classmethod
    def from_callable(cls, lat: Lattice, fn) -> "MeshFunction":
        return cls(lat, np.asarray(fn(lat.points), dtype=float))


def subdifferential_polygon(lam_row, stencil: Stencil, tol: float = 1e-10) -> ConvexPolygon:
    """Q(lam) for one constraint row, built exactly like the batch kernel.

    The canonical constraints seed the bounding box; the remaining directions
    clip in stencil (angular) order.
    """
    lam_row = np.asarray(lam_row, dtype=float)
    ip, im, jp, jm = (int(k) for k in stencil.canonical)
    lxp, lxm, lyp, lym = lam_row[ip], lam_row[im], lam_row[jp], lam_row[jm]
    if lxp + lxm < 0.0 or lyp + lym < 0.0:
        return EMPTY
    box = polygon([(lxp, -lym), (lxp, lyp), (-lxm, lyp), (-lxm, -lym)], tol)
    canon = {ip, im, jp, jm}
    hps = [Halfplane((float(stencil.directions[k, 0]), float(stencil.directions[k, 1])),
                     float(lam_row[k]))
           for k in range(stencil.n_dirs) if k not in canon]
    return intersect_halfplanes(hps, box, tol)


def lambda_vector(lat: Lattice, stencil: Stencil, target: ConvexPolygon,
                  values: np.ndarray, i: int):
    """Difference quotients at point i and the index supplying each neighbor value."""
    n = stencil.n_dirs
    lam = np.empty(n)
    tgt = np.empty(n, dtype=np.int64)
    vi = float(values[i])
    for k in range(n):
        val, j = neighbor_value(lat, target, values, i, stencil.directions[k])
        lam[k] = (val - vi) / lat.h
        tgt[k] = j
    return lam, tgt


def subdifferential(lat: Lattice, stencil: Stencil, target: ConvexPolygon,
                    values: np.ndarray, i: int, tol: float = 1e-10) -> ConvexPolygon:
    lam, _ = lambda_vector(lat, stencil, target, values, i)
    return subdifferential_polygon(lam, stencil, tol)


def ma_measure_at(lat: Lattice, stencil: Stencil, target: ConvexPolygon,
                  values: np.ndarray, i: int, density: Density,
                  rule: TriangleRule = TRIANGLE_DEGREE8, tol: float = 1e-10) -> float:
    """Cone measure of {x_i}: integral of the density over the subdifferential."""
    return integrate_polygon(subdifferential(lat, stencil, target, values, i, tol),
                             density, rule)


@dataclass
class MeasureEval:
    """One full evaluation of the measure (and optionally its derivatives)."""

    lam: np.ndarray             # (M+1, nV)
    tgt: np.ndarray             # (M+1, nV) neighbor / Gamma point index
    omega: np.ndarray           # (M+1,)
    L: np.ndarray | None        # (M+1, nV) facet integrals / (h |e|)
    gamma_ties: int
    min_pair_sum: float         # min over (i, e) of lam_e + lam_-e (convexity margin)
    verts: np.ndarray | None = None   # (M+1, maxv, 2) when polygons requested
    counts: np.ndarray | None = None  # (M+1,)


class Assembler:
    """Evaluates omega and facet derivatives for all lattice points at once."""

    def __init__(self, lat: Lattice, stencil: Stencil, target: ConvexPolygon,
                 density: Density, *, tol: float = 1e-10,
                 tri_rule: TriangleRule = TRIANGLE_DEGREE8,
                 seg_rule: SegmentRule = SEGMENT_GAUSS4, chunk: int = 16384):
        self.lat = lat
        self.stencil = stencil
        self.target = target
        self.density = density
        self.tol = float(tol)
        self.tri_rule = tri_rule
        self.seg_rule = seg_rule
        self.chunk = int(chunk)

        n = lat.n_points
        nV = stencil.n_dirs
        self.dirs = stencil.directions.astype(float)
        canon = set(int(k) for k in stencil.canonical)
        self.order = np.array([k for k in range(nV) if k not in canon], dtype=np.int64)

        # Neighbor table: point index of x_i + h e, or -1 when exterior.
        nbr = np.full((n, nV), -1, dtype=np.int64)
        for k in range(nV):
            c = lat.coords + stencil.directions[k]
            gi = c[:, 0] - lat.grid_origin[0]
            gj = c[:, 1] - lat.grid_origin[1]
            ok = ((gi >= 0) & (gi < lat.grid.shape[0])
                  & (gj >= 0) & (gj < lat.grid.shape[1]))
            nbr[ok, k] = lat.grid[gi[ok], gj[ok]]
        self.nbr = nbr

        # Distinct exterior neighbor points and the slot used by each (i, e).
        ext_mask = nbr < 0
        ii, kk = np.nonzero(ext_mask)
        zc = lat.coords[ii] + stencil.directions[kk]
        uniq, inv = np.unique(zc, axis=0, return_inverse=True)
        self.slot = np.full((n, nV), -1, dtype=np.int64)
        self.slot[ii, kk] = inv
        self.ext_pts = lat.offset + lat.h * uniq.astype(float)
        self.extension = ExtensionBatch(lat, target)

    # -- per-iterate state ------------------------------------------------

    def lambda_state(self, values: np.ndarray):
        """lam and neighbor-index tables from one frozen extension pass."""
        values = np.asarray(values, dtype=float)
        ext_vals, gammas, ties = self.extension(values, self.ext_pts)
        interior = self.nbr >= 0
        nbv = np.where(interior,
                       values[np.clip(self.nbr, 0, None)],
                       ext_vals[np.clip(self.slot, 0, None)])
        lam = (nbv - values[:, None]) / self.lat.h
        tgt = np.where(interior, self.nbr, gammas[np.clip(self.slot, 0, None)])
        return lam, tgt, int(ties)

    def evaluate(self, values: np.ndarray, *, want_jacobian: bool = False,
                 want_polygons: bool = False) -> MeasureEval:
        lam, tgt, ties = self.lambda_state(values)
        n = self.lat.n_points
        nV = self.stencil.n_dirs
        omega = np.empty(n)
        L = np.empty((n, nV)) if want_jacobian else None
        all_verts = None
        all_counts = None
        if want_polygons:
            all_verts = np.empty((n, nV + 4, 2))
            all_counts = np.empty(n, dtype=np.int64)
        for s in range(0, n, self.chunk):
            sl = slice(s, min(s + self.chunk, n))
            verts, counts = _kernel.clip_batch(lam[sl], self.dirs, self.order,
                                               self.stencil.canonical, self.tol)
            omega[sl] = self._omega_chunk(verts)
            if want_jacobian:
                L[sl] = self._facets_chunk(verts, counts, lam[sl])
            if want_polygons:
                all_verts[sl] = verts
                all_counts[sl] = counts
        pair = lam + lam[:, self.stencil.opposite]
        return MeasureEval(lam, tgt, omega, L, ties, float(pair.min()),
                           all_verts, all_counts)

    def _omega_chunk(self, verts: np.ndarray) -> np.ndarray:
        vx, vy = verts[:, :, 0], verts[:, :, 1]
        vxn, vyn = np.roll(vx, -1, axis=1), np.roll(vy, -1, axis=1)
        cross = vx * vyn - vxn * vy
        a2 = cross.sum(axis=1)
        # Area centroid with vertex-mean fallback for degenerate rows, same
        # thresholds as geometry.centroid. The padding repeats the first
        # vertex, so padded slots contribute nothing to the edge sums and the
        # degenerate fallback rows only carry zero-area triangles.
        scale = np.abs(verts).max(axis=(1, 2)) + 1.0
        safe = a2 > self.tol * scale * scale
        denom = np.where(safe, 3.0 * a2, 1.0)
        cx = np.where(safe, ((vx + vxn) * cross).sum(axis=1) / denom, vx.mean(axis=1))
        cy = np.where(safe, ((vy + vyn) * cross).sum(axis=1) / denom, vy.mean(axis=1))
        tcross = (vx - cx[:, None]) * (vyn - cy[:, None]) \
            - (vxn - cx[:, None]) * (vy - cy[:, None])
        tri_area = 0.5 * np.abs(tcross)
        b = self.tri_rule.barycentric
        w = self.tri_rule.weights
        total = np.zeros(verts.shape[0])
        for q in range(len(w)):
            nx = b[q, 0] * cx[:, None] + b[q, 1] * vx + b[q, 2] * vxn
            ny = b[q, 0] * cy[:, None] + b[q, 1] * vy + b[q, 2] * vyn
            vals = self.density(np.stack([nx.ravel(), ny.ravel()], axis=1))
            total += w[q] * (tri_area * vals.reshape(nx.shape)).sum(axis=1)
        return total

    def _facets_chunk(self, verts: np.ndarray, counts: np.ndarray,
                      lam: np.ndarray) -> np.ndarray:
        m, maxv, _ = verts.shape
        nV = self.stencil.n_dirs
        vx, vy = verts[:, :, 0], verts[:, :, 1]
        nonempty = counts > 0
        a = np.zeros((m, nV, 2))
        b = np.zeros((m, nV, 2))
        for k in range(nV):
            ex, ey = self.dirs[k]
            lk = lam[:, k]
            d = vx * ex + vy * ey - lk[:, None]
            act = (np.abs(d) <= self.tol * (1.0 + np.abs(lk))[:, None]) \
                & nonempty[:, None]
            t = vx * (-ey) + vy * ex
            rows = act.any(axis=1)
            ia = np.where(act, t, np.inf).argmin(axis=1)
            ib = np.where(act, t, -np.inf).argmax(axis=1)
            sel = np.arange(m)
            a[rows, k, 0] = vx[sel, ia][rows]
            a[rows, k, 1] = vy[sel, ia][rows]
            b[rows, k, 0] = vx[sel, ib][rows]
            b[rows, k, 1] = vy[sel, ib][rows]
        half = 0.5 * (b - a)
        mid = 0.5 * (a + b)
        length = 2.0 * np.sqrt((half ** 2).sum(axis=2))
        tq = self.seg_rule.nodes
        wq = self.seg_rule.weights
        acc = np.zeros((m, nV))
        for q in range(len(tq)):
            nodes = mid + tq[q] * half
            vals = self.density(nodes.reshape(-1, 2)).reshape(m, nV)
            acc += wq[q] * vals
        seg_integral = 0.5 * length * acc
        return seg_integral / (self.lat.h * self.stencil.norms[None, :])

    def jacobian_triplets(self, ev: MeasureEval):
        """COO triplets of d omega_i / d v(x_j) in point-index space.

        Each positive facet weight L contributes +L at column tgt(i, e) and
        -L to the diagonal; a Gamma selection equal to the point itself thus
        cancels out of its own row.
        """
        if ev.L is None:
            raise MeasureError("evaluation was made without jacobian data")
        n, nV = ev.L.shape
        mask = ev.L > 0.0
        rows = np.repeat(np.arange(n), nV)[mask.ravel()]
        cols = ev.tgt.ravel()[mask.ravel()]
        vals = ev.L.ravel()[mask.ravel()]
        diag_rows = np.arange(n)
        diag_vals = -ev.L.sum(axis=1)
        return (np.concatenate([rows, diag_rows]),
                np.concatenate([cols, diag_rows]),
                np.concatenate([vals, diag_vals]))


def max_target_violation(ev: MeasureEval, target: ConvexPolygon) -> float:
    """Largest signed distance of any subdifferential vertex outside the target."""
    if ev.verts is None:
        raise MeasureError("evaluation was made without polygon data")
    nonempty = ev.counts > 0
    if not nonempty.any():
        return 0.0
    v = ev.verts[nonempty].reshape(-1, 2)
    worst = -np.inf
    for hp in edge_halfplanes(target, normalize=True):
        worst = max(worst, float((v[:, 0] * hp.normal[0] + v[:, 1] * hp.normal[1]
                                  - hp.offset).max()))
    return worst


@dataclass
class WcddReport:
    """Weak diagonal dominance with chained strict rows, per assembled matrix."""

    n_rows: int
    min_slack: float          # min over rows of |a_ii| - sum_j |a_ij|, scaled check
    min_slack_row: int
    worst_rel_slack: float    # min of slack / row_scale
    n_strict: int
    n_zero_rows: int
    n_unreached: int
    max_path_length: int
    weakly_dominant: bool
    chained: bool

    @property
    def ok(self) -> bool:
        return self.weakly_dominant and self.chained and self.n_zero_rows == 0


def wcdd_diagnostic(J: sp.spmatrix, tol: float = 1e-12,
                    strict_tol: float = 1e-8) -> WcddReport:
    """Check the assembled Jacobian for weakly chained diagonal dominance.

    Every row must be weakly diagonally dominant up to tol * row_scale, and
    every row must reach a strictly dominant row through the nonzero pattern
    (following entries a_ij from row i to row j).
    """
    A = sp.csr_matrix(J)
    n = A.shape[0]
    absA = abs(A)
    diag = np.abs(A.diagonal())
    row_tot = np.asarray(absA.sum(axis=1)).ravel()
    off = row_tot - diag
    slack = diag - off
    row_scale = diag + off
    zero_rows = row_scale <= 0.0
    weak = np.all(slack >= -tol * np.maximum(row_scale, 1e-300))
    strict = slack > strict_tol * row_scale
    strict &= ~zero_rows

    # Breadth-first search toward the strict set along reversed edges.
    At = A.T.tocsr()
    depth = np.full(n, -1, dtype=np.int64)
    frontier = np.nonzero(strict)[0]
    depth[frontier] = 0
    level = 0
    while len(frontier):
        level += 1
        nxt = []
        for p in frontier:
            nbrs = At.indices[At.indptr[p]:At.indptr[p + 1]]
            for i in nbrs:
                if depth[i] < 0:
                    depth[i] = level
                    nxt.append(i)
        frontier = np.array(nxt, dtype=np.int64)
    unreached = int(np.sum(depth < 0))
    rel = slack / np.maximum(row_scale, 1e-300)
    worst_row = int(np.argmin(slack))
    return WcddReport(
        n_rows=n,
        min_slack=float(slack.min()) if n else 0.0,
        min_slack_row=worst_row,
        worst_rel_slack=float(rel.min()) if n else 0.0,
        n_strict=int(strict.sum()),
        n_zero_rows=int(zero_rows.sum()),
        n_unreached=unreached,
        max_path_length=int(depth.max()) if n else 0,
        weakly_dominant=bool(weak),
        chained=unreached == 0,
    )


class PinnedSystem:
    """Discrete system with the pinned value eliminated.

    Unknowns are the values at every non-pinned point in point order; the
    residual components are omega_i - mu_i over those points. The column of
    the pinned point is dropped from the Jacobian.
    """

    def __init__(self, assembler: Assembler, mu: np.ndarray, areas: np.ndarray,
                 pin_value: float, epsilon: float, total_mass: float):
        self.assembler = assembler
        self.lat = assembler.lat
        self.mu = np.asarray(mu, dtype=float)
        self.areas = np.asarray(areas, dtype=float)
        self.pin_value = float(pin_value)
        self.epsilon = float(epsilon)
        self.total_mass = float(total_mass)
        n = self.lat.n_points
        self.free = np.array([i for i in range(n) if i != self.lat.pinned])
        self.row_of = np.full(n, -1, dtype=np.int64)
        self.row_of[self.free] = np.arange(n - 1)
        self.n_unknowns = n - 1

    def full_values(self, u: np.ndarray) -> np.ndarray:
        vals = np.empty(self.lat.n_points)
        vals[self.free] = u
        vals[self.lat.pinned] = self.pin_value
        return vals

    def unknowns(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=float)[self.free]

    def residual(self, u: np.ndarray, *, want_jacobian: bool = False,
                 want_polygons: bool = False):
        ev = self.assembler.evaluate(self.full_values(u),
                                     want_jacobian=want_jacobian,
                                     want_polygons=want_polygons)
        return ev.omega[self.free] - self.mu[self.free], ev

    def jacobian(self, ev: MeasureEval) -> sp.csr_matrix:
        rows, cols, vals = self.assembler.jacobian_triplets(ev)
        rr = self.row_of[rows]
        cc = self.row_of[cols]
        keep = (rr >= 0) & (cc >= 0)
        m = self.n_unknowns
        return sp.coo_matrix((vals[keep], (rr[keep], cc[keep])),
                             shape=(m, m)).tocsr()

    def admissible(self, G: np.ndarray) -> bool:
        return bool(G.min() > -self.epsilon)

    def mass_error(self, ev: MeasureEval) -> float:
        return float(abs(ev.omega.sum() - self.total_mass))

    def pinned_equation_error(self, ev: MeasureEval) -> float:
        """Residual of the implied equation at the pinned point."""
        p = self.lat.pinned
        return float(abs(ev.omega[p] - self.mu[p]))


class AugmentedSystem:
    """Scaled-source variant: unknowns (v at free points, c), all equations kept.

    The residual components are omega_i - mu_i - c * area(C_i) for every
    point; the extra Jacobian column is -area(C_i). At the solution c vanishes
    by the tiling identity, so both systems share the same discrete solution.
    """

    def __init__(self, assembler: Assembler, mu: np.ndarray, areas: np.ndarray,
                 pin_value: float, epsilon: float, total_mass: float):
        self.assembler = assembler
        self.lat = assembler.lat
        self.mu = np.asarray(mu, dtype=float)
        self.areas = np.asarray(areas, dtype=float)
        self.pin_value = float(pin_value)
        self.epsilon = float(epsilon)
        self.total_mass = float(total_mass)
        n = self.lat.n_points
        self.free = np.array([i for i in range(n) if i != self.lat.pinned])
        self.row_of = np.full(n, -1, dtype=np.int64)
        self.row_of[self.free] = np.arange(n - 1)
        self.n_unknowns = n

    def full_values(self, u: np.ndarray) -> np.ndarray:
        vals = np.empty(self.lat.n_points)
        vals[self.free] = u[:-1]
        vals[self.lat.pinned] = self.pin_value
        return vals

    def unknowns(self, values: np.ndarray, c: float = 0.0) -> np.ndarray:
        return np.concatenate([np.asarray(values, dtype=float)[self.free], [c]])

    def residual(self, u: np.ndarray, *, want_jacobian: bool = False,
                 want_polygons: bool = False):
        ev = self.assembler.evaluate(self.full_values(u),
                                     want_jacobian=want_jacobian,
                                     want_polygons=want_polygons)
        return ev.omega - self.mu - u[-1] * self.areas, ev

    def jacobian(self, ev: MeasureEval) -> sp.csr_matrix:
        rows, cols, vals = self.assembler.jacobian_triplets(ev)
        cc = self.row_of[cols]
        keep = cc >= 0
        n = self.lat.n_points
        rset = [rows[keep], np.arange(n)]
        cset = [cc[keep], np.full(n, n - 1, dtype=np.int64)]
        vset = [vals[keep], -self.areas]
        return sp.coo_matrix((np.concatenate(vset),
                              (np.concatenate(rset), np.concatenate(cset))),
                             shape=(n, n)).tocsr()

    def admissible(self, G: np.ndarray) -> bool:
        return bool(G.min() > -self.epsilon)

    def mass_error(self, ev: MeasureEval) -> float:
        return float(abs(ev.omega.sum() - self.total_mass))

    def pinned_equation_error(self, ev: MeasureEval) -> float:
        p = self.lat.pinned
        return float(abs(ev.omega[p] - self.mu[p]))
