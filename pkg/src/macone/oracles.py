"""Independent cross-checks for the assembled system.

fd_jacobian differentiates the residual column by column with central
differences and flags entries whose difference quotient straddles a change
of neighbor assignment (the residual is only piecewise differentiable
there). mc_measure_oracle integrates a density over a polygon by rejection
sampling, giving an estimate with a standard error that the quadrature
value can be tested against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import ConvexPolygon, contains
from .quadrature import Density


def fd_jacobian(system, u: np.ndarray, step: float = 1e-6):
    """Dense central-difference Jacobian of system.residual at u.

    Returns (J, flip): flip[i, j] is True when perturbing unknown j by
    +-step changed either the neighbor / Gamma assignment or the set of
    active facets feeding residual row i, so entry (i, j) straddles a kink
    of the piecewise-smooth residual and the quotient is unreliable.
    """
    u = np.asarray(u, dtype=float)
    G0, ev0 = system.residual(u, want_jacobian=True)
    m, n = len(G0), len(u)
    row_pts = np.arange(m) if m == system.lat.n_points else system.free
    act0 = ev0.L > 0.0
    J = np.empty((m, n))
    flip = np.zeros((m, n), dtype=bool)
    for j in range(n):
        up = u.copy()
        um = u.copy()
        up[j] += step
        um[j] -= step
        Gp, evp = system.residual(up, want_jacobian=True)
        Gm, evm = system.residual(um, want_jacobian=True)
        J[:, j] = (Gp - Gm) / (2.0 * step)
        changed = (np.any(evp.tgt != evm.tgt, axis=1)
                   | np.any(evp.tgt != ev0.tgt, axis=1)
                   | np.any((evp.L > 0.0) != (evm.L > 0.0), axis=1)
                   | np.any((evp.L > 0.0) != act0, axis=1))
        if changed.any():
            flip[:, j] = changed[row_pts]
    return J, flip


@dataclass
class JacobianCheck:
    max_rel_err: float          # over entries not flagged as assignment flips
    worst: tuple[int, int]
    n_flagged: int
    frac_flagged: float
    n_entries: int
    analytic: np.ndarray | None = None
    fd: np.ndarray | None = None


def compare_jacobian(system, u: np.ndarray, step: float = 1e-6,
                     keep_matrices: bool = False) -> JacobianCheck:
    """Analytic vs finite-difference Jacobian at u.

    Relative error uses the entrywise denominator
    max(|analytic|, |fd|, 1e-3 * max |analytic|) so near-zero entries are
    judged against the matrix scale rather than against themselves.
    """
    _, ev = system.residual(u, want_jacobian=True)
    A = system.jacobian(ev).toarray()
    F, flip = fd_jacobian(system, u, step)
    scale = float(np.abs(A).max())
    denom = np.maximum(np.maximum(np.abs(A), np.abs(F)), 1e-3 * scale)
    rel = np.abs(A - F) / denom
    rel_clean = np.where(flip, 0.0, rel)
    i, j = np.unravel_index(int(np.argmax(rel_clean)), rel.shape)
    return JacobianCheck(
        max_rel_err=float(rel_clean.max()),
        worst=(int(i), int(j)),
        n_flagged=int(flip.sum()),
        frac_flagged=float(flip.mean()),
        n_entries=int(rel.size),
        analytic=A if keep_matrices else None,
        fd=F if keep_matrices else None,
    )


def perturbed_start(system, u0: np.ndarray, seed: int,
                    scale: float = 3e-4, tries: int = 20) -> np.ndarray:
    """Random perturbation of u0 at which the derivative check is well-posed.

    The unperturbed quadratic guess sits exactly on assignment-tie
    coincidences of the extension, so derivative checks run at a generic
    nearby point instead: one with a tie-free extension and every
    subdifferential of positive measure (the facet formulas' hypotheses).
    Halves the scale until both hold.
    """
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(len(u0))
    for _ in range(tries):
        u = u0 + scale * noise
        G, ev = system.residual(u)
        if ev.gamma_ties == 0 and float(ev.omega.min()) > 0.0:
            return u
        scale *= 0.5
    raise RuntimeError("no tie-free positive-measure perturbation found")


def mc_measure_oracle(poly: ConvexPolygon, density: Density,
                      n_samples: int = 1_000_000, seed: int = 0):
    """Rejection-sampling integral of the density over the polygon.

    Returns (estimate, sigma) with sigma the standard error of the
    estimate; sigma is 0 when the integrand is constant over the bounding
    box, as for an indicator-exact case.
    """
    if poly.is_empty:
        return 0.0, 0.0
    v = poly.vertices
    lo, hi = v.min(axis=0), v.max(axis=0)
    box_area = float(np.prod(hi - lo))
    if box_area == 0.0:
        return 0.0, 0.0
    rng = np.random.default_rng(seed)
    pts = rng.uniform(lo, hi, size=(n_samples, 2))
    vals = np.zeros(n_samples)
    inside = contains(poly, pts, tol=0.0)
    if inside.any():
        vals[inside] = density(pts[inside])
    est = box_area * float(vals.mean())
    sigma = box_area * float(vals.std(ddof=1)) / np.sqrt(n_samples)
    return est, sigma
