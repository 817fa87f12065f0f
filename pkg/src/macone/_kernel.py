"""Batch halfplane-intersection kernel.

Clips many constraint polygons {p : p . e_k <= lam[k]} at once, one row per
constraint vector. The loop mirrors geometry.clip_halfplane / geometry.polygon
exactly (same inside test, interpolation and deduplication formulas), so the
scalar path and this kernel agree to roundoff. Compiled with numba when
available; the plain-Python fallback runs the same code.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if len(args) == 1 and callable(args[0]):
            return args[0]
        return wrap


@njit(cache=True)
def _close_pt(ax, ay, bx, by, tol):
    m = abs(ax)
    if abs(ay) > m:
        m = abs(ay)
    if abs(bx) > m:
        m = abs(bx)
    if abs(by) > m:
        m = abs(by)
    m = tol * (1.0 + m)
    return abs(ax - bx) <= m and abs(ay - by) <= m


@njit(cache=True)
def _dedup(inx, iny, n, outx, outy, tol):
    if n == 0:
        return 0
    outx[0] = inx[0]
    outy[0] = iny[0]
    m = 1
    for q in range(1, n):
        if not _close_pt(inx[q], iny[q], outx[m - 1], outy[m - 1], tol):
            outx[m] = inx[q]
            outy[m] = iny[q]
            m += 1
    if m > 1 and _close_pt(outx[m - 1], outy[m - 1], outx[0], outy[0], tol):
        m -= 1
    return m


@njit(cache=True)
def _clip_rows(lam, dirs, order, canon, tol, verts, counts):
    n = lam.shape[0]
    maxv = verts.shape[1]
    scratch = 4 * maxv
    ax = np.empty(scratch)
    ay = np.empty(scratch)
    bx = np.empty(scratch)
    by = np.empty(scratch)
    d = np.empty(scratch)
    ip, im, jp, jm = canon[0], canon[1], canon[2], canon[3]
    for r in range(n):
        lxp = lam[r, ip]
        lxm = lam[r, im]
        lyp = lam[r, jp]
        lym = lam[r, jm]
        cnt = 0
        if lxp + lxm >= 0.0 and lyp + lym >= 0.0:
            ax[0] = lxp
            ay[0] = -lym
            ax[1] = lxp
            ay[1] = lyp
            ax[2] = -lxm
            ay[2] = lyp
            ax[3] = -lxm
            ay[3] = -lym
            cnt = _dedup(ax, ay, 4, bx, by, tol)
            for oi in range(len(order)):
                if cnt == 0:
                    break
                k = order[oi]
                nx = dirs[k, 0]
                ny = dirs[k, 1]
                c = lam[r, k]
                eps = tol * (1.0 + abs(c))
                allin = True
                anyin = False
                for q in range(cnt):
                    dq = bx[q] * nx + by[q] * ny - c
                    d[q] = dq
                    if dq <= eps:
                        anyin = True
                    else:
                        allin = False
                if allin:
                    continue
                if not anyin:
                    cnt = 0
                    break
                m = 0
                for q in range(cnt):
                    s = q + 1 if q + 1 < cnt else 0
                    if d[q] <= eps:
                        ax[m] = bx[q]
                        ay[m] = by[q]
                        m += 1
                    if (d[q] <= eps) != (d[s] <= eps):
                        t = d[q] / (d[q] - d[s])
                        ax[m] = bx[q] + t * (bx[s] - bx[q])
                        ay[m] = by[q] + t * (by[s] - by[q])
                        m += 1
                cnt = _dedup(ax, ay, m, bx, by, tol)
        counts[r] = cnt
        if cnt == 0:
            for q in range(maxv):
                verts[r, q, 0] = 0.0
                verts[r, q, 1] = 0.0
        else:
            for q in range(cnt):
                verts[r, q, 0] = bx[q]
                verts[r, q, 1] = by[q]
            for q in range(cnt, maxv):
                verts[r, q, 0] = bx[0]
                verts[r, q, 1] = by[0]


def clip_batch(lam, dirs, order, canon, tol):
    """Clip every row of lam; returns (verts, counts).

    verts has shape (n, maxv, 2) with rows padded by their first vertex so
    that cyclic edge sums need no count masking; counts gives the number of
    genuine vertices per row (0 for empty intersections).
    """
    lam = np.ascontiguousarray(lam, dtype=np.float64)
    n, n_dirs = lam.shape
    maxv = n_dirs + 4
    verts = np.empty((n, maxv, 2))
    counts = np.empty(n, dtype=np.int64)
    _clip_rows(lam, np.ascontiguousarray(dirs, dtype=np.float64),
               np.ascontiguousarray(order, dtype=np.int64),
               np.ascontiguousarray(canon, dtype=np.int64),
               float(tol), verts, counts)
    if counts.max(initial=0) > maxv:  # pragma: no cover - safety net
        raise RuntimeError("clip buffer overflow")
    return verts, counts
