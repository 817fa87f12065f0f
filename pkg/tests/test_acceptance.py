"""End-to-end acceptance checks at their stated tolerances.

Each test prints exactly one summary line (visible with pytest -s) and then
asserts. The checks cover: reproduction of the published refinement table,
derivative correctness against finite differences, the mass/tiling identity,
subdifferential containment, the line-search contract, diagonal-dominance
structure, quadrature-vs-Monte-Carlo oracle agreement, and a manufactured
instance solved to rounding accuracy.
"""

import time
import warnings

import numpy as np
import pytest

from macone import (ConvexPolygon, NewtonConfig, damped_newton,
                    max_target_violation, mc_measure_oracle, nodal_errors,
                    run_convergence, wcdd_diagnostic)
from macone.oracles import compare_jacobian, perturbed_start
from macone.problems import initial_quadratic
from macone.quadrature import SEGMENT_GAUSS4, TRIANGLE_RULES
from conftest import greens_monomial_integral, solve_instrumented

# Published maximum errors for the Gaussian-density problem; each level must
# land within a factor of two and successive levels must show a rate near 1.
TABLE = {6: 2.54e-2, 7: 1.31e-2, 8: 6.68e-3, 9: 3.38e-3}
RATE_WINDOW = (0.8, 1.15)


def report(num, name, ok, detail):
    print(f"[acceptance {num}] {name}: {'PASS' if ok else 'FAIL'} ({detail})")


def check_levels(rows, exponents, failures):
    err = {k: r.max_error for k, r in zip(exponents, rows)}
    rate = {k: r.rate for k, r in zip(exponents, rows)}
    for r in rows:
        if not r.converged:
            failures.append(f"level h={r.h:g} failed: {r.note}")
    for k in exponents[1:]:
        lo, hi = TABLE[k] / 2.0, TABLE[k] * 2.0
        if not lo <= err[k] <= hi:
            failures.append(f"error at h=2^-{k} is {err[k]:.3e}, "
                            f"outside [{lo:.2e}, {hi:.2e}]")
        if not RATE_WINDOW[0] <= rate[k] <= RATE_WINDOW[1]:
            failures.append(f"rate at h=2^-{k} is {rate[k]:.3f}, "
                            f"outside {RATE_WINDOW}")
    return err, rate


def test_1_convergence_table_reproduction(s5_spec):
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rows = run_convergence(s5_spec, [5, 6, 7])
    elapsed = time.perf_counter() - t0
    failures = []
    err, rate = check_levels(rows, [5, 6, 7], failures)
    if elapsed >= 120.0:
        failures.append(f"runtime {elapsed:.0f}s exceeds 120s")
    report(1, "refinement table", not failures,
           f"errors {err[6]:.3e}/{err[7]:.3e} vs published "
           f"{TABLE[6]:.2e}/{TABLE[7]:.2e}, rates {rate[6]:.3f}/{rate[7]:.3f},"
           f" {elapsed:.0f}s")
    assert not failures, "; ".join(failures)


@pytest.mark.extended
def test_1x_convergence_table_extended(s5_spec):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rows = run_convergence(s5_spec, [7, 8, 9])
    failures = []
    err, rate = check_levels(rows, [7, 8, 9], failures)
    report(1, "refinement table, extended levels", not failures,
           f"errors {err[8]:.3e}/{err[9]:.3e}, rates {rate[8]:.3f}/{rate[9]:.3f}")
    assert not failures, "; ".join(failures)


def test_2_jacobian_matches_finite_differences(s5_coarse):
    system = s5_coarse.system
    u0 = system.unknowns(initial_quadratic(s5_coarse))
    worst_err, worst_frac = 0.0, 0.0
    for seed in range(5):
        u = perturbed_start(system, u0, seed=seed)
        chk = compare_jacobian(system, u, step=1e-6)
        worst_err = max(worst_err, chk.max_rel_err)
        worst_frac = max(worst_frac, chk.frac_flagged)
    ok = worst_err <= 1e-5 and worst_frac <= 0.02
    report(2, "analytic vs finite-difference derivative", ok,
           f"max rel err {worst_err:.2e} <= 1e-5, "
           f"flagged {100 * worst_frac:.2f}% <= 2%")
    assert worst_err <= 1e-5
    assert worst_frac <= 0.02


def test_3_mass_conservation_at_accepted_iterates(s5_mid):
    prob, base = s5_mid
    bound = 1e-5 * prob.total_mass
    # A run whose every iterate is admissible: start from a tiny perturbation
    # of the computed solution, inside the margin set.
    rng = np.random.default_rng(0)
    u0 = base.unknowns + 3e-8 * rng.standard_normal(len(base.unknowns))
    G0, _ = prob.system.residual(u0)
    assert prob.system.admissible(G0)
    res = damped_newton(prob.system, u0, NewtonConfig(mode="theory"))
    assert res.converged
    errs = [rec.mass_error for rec in res.trace.iterations]
    errs.append(prob.system.mass_error(res.final_eval))
    # Accepted iterates of the bootstrap run that already sat inside the
    # margin set are held to the same identity.
    n_adm = 0
    for rec in base.trace.iterations:
        accepted = [t for t in rec.trials if t.accepted]
        if accepted and accepted[0].admissible:
            errs.append(rec.mass_error)
            n_adm += 1
    errs.append(prob.system.mass_error(base.final_eval))
    ok = max(errs) <= bound
    report(3, "mass conservation / tiling", ok,
           f"max |sum omega - total| {max(errs):.2e} <= {bound:.2e} over "
           f"{len(errs)} admissible iterates")
    assert max(errs) <= bound


def test_4_subdifferential_containment(s5_mid):
    prob, res = s5_mid
    _, ev = prob.system.residual(res.unknowns, want_polygons=True)
    violation = max_target_violation(ev, prob.spec.target)
    ok = violation <= 1e-8
    report(4, "subdifferential containment", ok,
           f"max overshoot {violation:.2e} <= 1e-8 over "
           f"{prob.lattice.n_points} polygons")
    assert violation <= 1e-8


def line_search_violations(system, res, delta):
    """Accepted-step decrease factor and trial bookkeeping, re-evaluated."""
    bad = []
    norms = [rec.residual_norm for rec in res.trace.iterations]
    norms.append(res.final_residual)
    for rec, nxt in zip(res.trace.iterations, norms[1:]):
        factor = 1.0 - delta * 0.5 ** rec.i_k
        if nxt > factor * rec.residual_norm * (1.0 + 1e-14):
            bad.append(f"step {rec.k}: {nxt:.3e} > "
                       f"{factor:.6f} * {rec.residual_norm:.3e}")
        for t in rec.trials:
            u_t = rec.u - t.tau * rec.direction
            G_t, _ = system.residual(u_t)
            norm_t = float(np.linalg.norm(G_t))
            if abs(norm_t - t.residual_norm) > 1e-12 * (1.0 + norm_t):
                bad.append(f"step {rec.k} trial {t.i}: recorded norm "
                           f"{t.residual_norm:.6e} vs {norm_t:.6e}")
            if system.admissible(G_t) != t.admissible:
                bad.append(f"step {rec.k} trial {t.i}: admissibility flag "
                           f"disagrees with re-evaluation")
    return bad


def test_5_line_search_contract(s5_mid, toy_solved):
    bad = []
    n_steps = 0
    for prob, res in (s5_mid, toy_solved):
        bad += line_search_violations(prob.system, res, delta=0.0)
        n_steps += res.iterations
    # Theory-mode run exercises the delta = 0.1 damping branch.
    prob, _ = toy_solved
    base = solve_instrumented(prob)
    rng = np.random.default_rng(1)
    u0 = base.unknowns + 1e-9 * rng.standard_normal(len(base.unknowns))
    res = damped_newton(prob.system, u0,
                        NewtonConfig(mode="theory", record_vectors=True))
    assert res.converged
    bad += line_search_violations(prob.system, res, delta=0.1)
    n_steps += res.iterations
    report(5, "line-search contract", not bad,
           f"{n_steps} accepted steps and all recorded trials re-evaluated")
    assert not bad, "; ".join(bad)


def test_6_jacobian_dominance_chain(s5_mid):
    prob, res = s5_mid
    reports = [rec.wcdd for rec in res.trace.iterations]
    _, ev = prob.system.residual(res.unknowns, want_jacobian=True)
    reports.append(wcdd_diagnostic(prob.system.jacobian(ev)))
    ok = all(r is not None and r.ok for r in reports)
    worst = min(r.worst_rel_slack for r in reports if r is not None)
    depth = max(r.max_path_length for r in reports if r is not None)
    report(6, "weak dominance with chain to strict rows", ok,
           f"{len(reports)} iterates, worst row slack {worst:.1e} "
           f">= -1e-12, longest chain {depth}")
    assert ok


def test_7_measure_oracle_equivalence(s5_mid):
    prob, res = s5_mid
    _, ev = prob.system.residual(res.unknowns, want_polygons=True)
    rng = np.random.default_rng(7)
    picks = rng.choice(prob.lattice.n_points, size=20, replace=False)
    worst_z = 0.0
    for i in picks:
        c = int(ev.counts[i])
        poly = ConvexPolygon(ev.verts[i, :c].copy())
        est, sigma = mc_measure_oracle(poly, prob.spec.density,
                                       n_samples=10 ** 6, seed=100 + int(i))
        assert sigma > 0.0
        worst_z = max(worst_z, abs(ev.omega[i] - est) / sigma)
    mc_ok = worst_z <= 3.0

    tri = np.array([(0.1, 0.2), (1.3, 0.4), (0.5, 1.6)])
    tri_err = seg_err = 0.0
    for rule in TRIANGLE_RULES.values():
        bary = rule.barycentric
        nodes = bary @ tri
        w = rule.weights
        e1, e2 = tri[1] - tri[0], tri[2] - tri[0]
        doubled = abs(e1[0] * e2[1] - e1[1] * e2[0])
        for a in range(rule.degree + 1):
            for b in range(rule.degree + 1 - a):
                got = 0.5 * doubled * float(
                    np.sum(w * nodes[:, 0] ** a * nodes[:, 1] ** b))
                ref = greens_monomial_integral(tri, a, b)
                tri_err = max(tri_err, abs(got - ref) / max(1.0, abs(ref)))
    for k in range(8):
        exact = 2.0 / (k + 1) if k % 2 == 0 else 0.0
        got = float(np.sum(SEGMENT_GAUSS4.weights * SEGMENT_GAUSS4.nodes ** k))
        seg_err = max(seg_err, abs(got - exact))
    rules_ok = tri_err <= 1e-13 and seg_err <= 1e-13

    report(7, "quadrature oracle equivalence", mc_ok and rules_ok,
           f"20 polygons vs 1e6-sample Monte Carlo, worst {worst_z:.2f} sigma"
           f" <= 3; rule exactness {max(tri_err, seg_err):.1e} <= 1e-13")
    assert worst_z <= 3.0
    assert rules_ok


def test_8_manufactured_instance_to_rounding(toy_solved):
    prob, res = toy_solved
    dev = float(nodal_errors(prob, res.values).max())
    tail = [rec.i_k for rec in res.trace.iterations[-3:]]
    ok = (res.converged and res.iterations <= 25 and dev <= 1e-9
          and all(i == 0 for i in tail))
    report(8, "manufactured 3x3 instance", ok,
           f"{res.iterations} iterations, max deviation {dev:.2e} <= 1e-9, "
           f"full steps at the end {tail}")
    assert res.converged
    assert res.iterations <= 25
    assert dev <= 1e-9
    assert all(i == 0 for i in tail)
