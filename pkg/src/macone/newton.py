"""Damped Newton iteration for the discrete system.

Each step solves J d = G with a direct sparse factorization and backtracks
over trial points p(tau) = u - tau d, tau = rho^i, accepting the first i
whose trial both stays in the admissible set {G_l > -epsilon} and satisfies
the residual decrease test |G(p)| <= (1 - delta rho^i) |G(u)|. Every trial
residual is a fresh evaluation of the same deterministic function, so the
decisions recorded in the trace can be reproduced afterwards.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .measure import MeasureEval, wcdd_diagnostic


class LinearSolveError(RuntimeError):
    pass


class InadmissibleStartError(RuntimeError):
    pass


@dataclass
class NewtonConfig:
    """Iteration controls.

    mode "theory" keeps the damping default delta = 0.1 and refuses
    inadmissible starting points; mode "experiment" uses delta = 0 with a
    strict-decrease safeguard and warns-and-proceeds on inadmissible starts,
    accepting on decrease plus nonempty subdifferentials until the iterates
    enter the admissible set.
    """

    mode: str = "theory"
    delta: float | None = None
    rho: float = 0.5
    max_iterations: int = 100
    max_backtracks: int = 60
    residual_tolerance: float | None = None  # default 1e-11 * total mass
    record_vectors: bool = False
    record_wcdd: bool = False
    strict_decrease: float = 1e-16

    def resolved_delta(self) -> float:
        if self.delta is not None:
            return float(self.delta)
        return 0.0 if self.mode == "experiment" else 0.1

    def __post_init__(self):
        if self.mode not in ("theory", "experiment"):
            raise ValueError(f"unknown mode {self.mode!r}")
        d = self.resolved_delta()
        if not 0.0 <= d < 1.0:
            raise ValueError("delta must lie in [0, 1)")
        if not 0.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (0, 1)")


@dataclass
class TrialRecord:
    i: int
    tau: float
    residual_norm: float
    min_component: float
    min_omega: float
    admissible: bool
    accepted: bool


@dataclass
class IterationRecord:
    k: int
    residual_norm: float
    i_k: int
    step_norm: float
    backtracks: int
    wall_time_ms: float
    linear_residual: float
    trials: list[TrialRecord] = field(default_factory=list)
    mass_error: float | None = None
    wcdd: object | None = None
    u: np.ndarray | None = None
    direction: np.ndarray | None = None


@dataclass
class NewtonTrace:
    iterations: list[IterationRecord] = field(default_factory=list)
    converged: bool = False
    failure: str | None = None
    final_residual: float = np.nan
    epsilon: float = np.nan
    residual_tolerance: float = np.nan


@dataclass
class NewtonResult:
    values: np.ndarray          # full mesh values at the final iterate
    unknowns: np.ndarray
    trace: NewtonTrace
    converged: bool
    iterations: int
    final_residual: float
    final_eval: MeasureEval | None = None


def solve_linear(J: sp.spmatrix, g: np.ndarray) -> tuple[np.ndarray, float]:
    """Direct sparse solve of J d = g with one refinement pass.

    Returns (d, |J d - g|). Raises LinearSolveError for singular
    factorizations or when the residual check 1e-12 |g| cannot be met.
    """
    A = sp.csc_matrix(J)
    g = np.asarray(g, dtype=float)
    gnorm = float(np.linalg.norm(g))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", spla.MatrixRankWarning)
            lu = spla.splu(A)
            d = lu.solve(g)
    except (RuntimeError, spla.MatrixRankWarning) as exc:
        zero_rows = np.where(np.asarray(abs(A).sum(axis=1)).ravel() == 0.0)[0]
        detail = f"; all-zero rows {zero_rows[:5].tolist()}" if len(zero_rows) else ""
        raise LinearSolveError(f"singular Jacobian factorization: {exc}{detail}") from exc
    if not np.all(np.isfinite(d)):
        raise LinearSolveError("factorization produced non-finite solution")
    res = float(np.linalg.norm(A @ d - g))
    if res > 1e-12 * gnorm:
        d = d + lu.solve(g - A @ d)
        res = float(np.linalg.norm(A @ d - g))
        if res > 1e-12 * gnorm:
            raise LinearSolveError(
                f"linear residual {res:.3e} exceeds 1e-12 * |g| after refinement")
    return d, res


def _norm(G: np.ndarray) -> float:
    return float(np.linalg.norm(G))


def line_search(system, u, G, gnorm, d, cfg: NewtonConfig, enforce_membership: bool):
    """Backtracking over tau = rho^i per the damped algorithm.

    Returns (i_k, u_next, G_next, ev_next, trials). Raises RuntimeError once
    max_backtracks trials were rejected.
    """
    delta = cfg.resolved_delta()
    trials: list[TrialRecord] = []
    for i in range(cfg.max_backtracks + 1):
        tau = cfg.rho ** i
        u_t = u - tau * d
        G_t, ev_t = system.residual(u_t)
        norm_t = _norm(G_t)
        min_c = float(G_t.min())
        min_omega = float(ev_t.omega.min())
        admissible = system.admissible(G_t)
        if delta > 0.0:
            decreased = norm_t <= (1.0 - delta * tau) * gnorm
        else:
            decreased = norm_t <= (1.0 - cfg.strict_decrease) * gnorm
        member = admissible if enforce_membership else (min_omega > 0.0)
        accepted = bool(decreased and member)
        trials.append(TrialRecord(i, tau, norm_t, min_c, min_omega,
                                  admissible, accepted))
        if accepted:
            return i, u_t, G_t, ev_t, trials
    raise RuntimeError("line search exhausted max_backtracks")


def damped_newton(system, u0: np.ndarray, cfg: NewtonConfig) -> NewtonResult:
    """Run the damped Newton iteration from u0.

    Non-convergence (iteration budget, stalled line search, singular
    factorization) is reported through the trace failure flag rather than an
    exception; an inadmissible start is an error in theory mode.
    """
    tol = cfg.residual_tolerance
    if tol is None:
        tol = 1e-11 * system.total_mass
    trace = NewtonTrace(epsilon=system.epsilon, residual_tolerance=float(tol))

    u = np.asarray(u0, dtype=float).copy()
    G, ev = system.residual(u)
    gnorm = _norm(G)
    enforce = system.admissible(G)
    if not enforce:
        msg = (f"initial point inadmissible: min G = {G.min():.3e}"
               f" <= -epsilon = {-system.epsilon:.3e}")
        if cfg.mode == "theory":
            raise InadmissibleStartError(msg)
        warnings.warn(msg + "; proceeding on residual decrease", RuntimeWarning)

    for k in range(cfg.max_iterations):
        t0 = time.perf_counter()
        if gnorm <= tol:
            trace.converged = True
            break
        if ev.omega.min() <= 0.0 and enforce:
            trace.failure = f"empty subdifferential at accepted iterate {k}"
            break
        try:
            Gj, ev = system.residual(u, want_jacobian=True)
            J = system.jacobian(ev)
            zero = np.where(np.asarray(abs(J).sum(axis=1)).ravel() == 0.0)[0]
            if len(zero):
                raise LinearSolveError(
                    f"all-zero Jacobian rows at accepted iterate: {zero[:5].tolist()}")
            d, linres = solve_linear(J, Gj)
            i_k, u_next, G_next, ev_next, trials = line_search(
                system, u, Gj, gnorm, d, cfg, enforce)
        except (LinearSolveError, RuntimeError) as exc:
            trace.failure = str(exc)
            break
        rec = IterationRecord(
            k=k,
            residual_norm=gnorm,
            i_k=i_k,
            step_norm=float(np.linalg.norm(cfg.rho ** i_k * d)),
            backtracks=i_k,
            wall_time_ms=(time.perf_counter() - t0) * 1e3,
            linear_residual=linres,
            trials=trials,
            mass_error=system.mass_error(ev),
        )
        if cfg.record_wcdd:
            rec.wcdd = wcdd_diagnostic(J)
        if cfg.record_vectors:
            rec.u = u.copy()
            rec.direction = d.copy()
        trace.iterations.append(rec)
        u, G, ev = u_next, G_next, ev_next
        gnorm = _norm(G)
        if not enforce:
            enforce = system.admissible(G)
    else:
        trace.failure = trace.failure or "max_iterations reached"

    if gnorm <= tol:
        trace.converged = True
    trace.final_residual = gnorm
    return NewtonResult(
        values=system.full_values(u),
        unknowns=u,
        trace=trace,
        converged=trace.converged,
        iterations=len(trace.iterations),
        final_residual=gnorm,
        final_eval=ev,
    )
