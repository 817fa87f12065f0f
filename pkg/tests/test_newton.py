"""Damped Newton driver: trace integrity, damping contract, failure modes."""

import warnings

import numpy as np
import pytest
import scipy.sparse as sp

from macone import (InadmissibleStartError, LinearSolveError, NewtonConfig,
                    damped_newton, initial_quadratic, nodal_errors,
                    solve_linear)
from conftest import solve_instrumented


def test_manufactured_problem_reaches_exact_solution(toy_solved):
    prob, res = toy_solved
    assert res.converged
    assert res.iterations <= 25
    assert nodal_errors(prob, res.values).max() <= 1e-9


def test_trace_structure(s5_mid):
    prob, res = s5_mid
    trace = res.trace
    assert len(trace.iterations) == res.iterations
    assert trace.converged and res.converged
    assert res.final_residual == trace.final_residual
    assert trace.final_residual <= trace.residual_tolerance
    for rec in trace.iterations:
        assert rec.backtracks == rec.i_k
        assert [t.i for t in rec.trials] == list(range(rec.i_k + 1))
        assert [t.accepted for t in rec.trials] == \
            [False] * rec.i_k + [True]
        # step_norm is tau * |d| for the accepted trial.
        assert rec.step_norm == pytest.approx(
            0.5 ** rec.i_k * float(np.linalg.norm(rec.direction)), rel=1e-12)
        assert rec.linear_residual <= 1e-10 * rec.residual_norm


def test_residual_norms_never_increase(s5_mid):
    _, res = s5_mid
    norms = [rec.residual_norm for rec in res.trace.iterations]
    norms.append(res.final_residual)
    assert all(b <= a * (1.0 + 1e-14) for a, b in zip(norms, norms[1:]))


def test_theory_mode_rejects_inadmissible_start(toy_solved):
    prob, _ = toy_solved
    u0 = prob.system.unknowns(initial_quadratic(prob))
    with pytest.raises(InadmissibleStartError):
        damped_newton(prob.system, u0, NewtonConfig(mode="theory"))


def test_theory_mode_damping_inequality(s5_coarse):
    # Start admissibly (tiny perturbation of a converged solution) and check
    # the accepted-step decrease factor (1 - delta * rho^i) with delta = 0.1.
    prob = s5_coarse
    base = solve_instrumented(prob)
    assert base.converged
    rng = np.random.default_rng(0)
    u0 = base.unknowns + 3e-8 * rng.standard_normal(len(base.unknowns))
    G0, _ = prob.system.residual(u0)
    assert prob.system.admissible(G0)
    res = damped_newton(prob.system, u0, NewtonConfig(mode="theory"))
    assert res.converged
    norms = [rec.residual_norm for rec in res.trace.iterations]
    norms.append(res.final_residual)
    for rec, nxt in zip(res.trace.iterations, norms[1:]):
        assert nxt <= (1.0 - 0.1 * 0.5 ** rec.i_k) * rec.residual_norm \
            * (1.0 + 1e-14)


def test_solver_is_deterministic(toy_solved):
    prob, res = toy_solved
    res2 = solve_instrumented(prob)
    assert np.array_equal(res.values, res2.values)
    assert [r.i_k for r in res.trace.iterations] == \
        [r.i_k for r in res2.trace.iterations]


def test_iteration_budget_reports_failure(s5_coarse):
    prob = s5_coarse
    u0 = prob.system.unknowns(initial_quadratic(prob))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = damped_newton(prob.system, u0,
                            NewtonConfig(mode="experiment", max_iterations=2))
    assert not res.converged
    assert res.trace.failure == "max_iterations reached"
    assert res.iterations == 2


def test_solve_linear_accuracy_and_singularity():
    rng = np.random.default_rng(8)
    n = 40
    A = rng.standard_normal((n, n))
    A += np.diag(np.abs(A).sum(axis=1) + 1.0)
    g = rng.standard_normal(n)
    d, linres = solve_linear(sp.csr_matrix(A), g)
    assert np.allclose(A @ d, g, atol=1e-10)
    assert linres <= 1e-12 * np.linalg.norm(g)
    with pytest.raises(LinearSolveError):
        solve_linear(sp.csr_matrix(np.zeros((3, 3))), np.ones(3))
