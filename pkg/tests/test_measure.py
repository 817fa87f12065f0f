"""Measure assembly: batch kernel vs scalar path, tiling, Jacobian structure."""

import warnings

import numpy as np
import pytest
import scipy.sparse as sp

from macone import (Assembler, MeshFunction, NewtonConfig, build_system,
                    damped_newton, initial_quadratic, max_target_violation,
                    wcdd_diagnostic)
from macone.measure import ma_measure_at, subdifferential
from macone.geometry import area, centroid
from macone.oracles import compare_jacobian, perturbed_start


def noisy_quadratic(prob, seed, scale=1e-3):
    rng = np.random.default_rng(seed)
    return initial_quadratic(prob) + scale * rng.standard_normal(
        prob.lattice.n_points)


def test_batch_evaluation_matches_scalar_path(s5_coarse):
    prob = s5_coarse
    values = noisy_quadratic(prob, 0)
    ev = prob.assembler.evaluate(values, want_polygons=True)
    rng = np.random.default_rng(1)
    for i in rng.choice(prob.lattice.n_points, size=12, replace=False):
        direct = ma_measure_at(prob.lattice, prob.stencil, prob.spec.target,
                               values, int(i), prob.spec.density)
        assert ev.omega[i] == pytest.approx(direct, rel=1e-12)
        poly = subdifferential(prob.lattice, prob.stencil, prob.spec.target,
                               values, int(i))
        c = int(ev.counts[i])
        if c < 3:
            # Both paths must agree the polygon is degenerate.
            assert poly.is_empty and ev.omega[i] == 0.0
            continue
        batch = type(poly)(ev.verts[i, :c])
        assert area(batch) == pytest.approx(area(poly), rel=1e-10)
        assert centroid(batch) == pytest.approx(centroid(poly), abs=1e-10)


def test_convexity_margin_sign(s5_coarse):
    prob = s5_coarse
    v0 = initial_quadratic(prob)
    ev = prob.assembler.evaluate(v0)
    assert ev.min_pair_sum > 0.0
    assert ev.omega.min() > 0.0
    # A concave function has empty subdifferentials at interior points; the
    # cone extension can still leave slack constraints at boundary points.
    ev_neg = prob.assembler.evaluate(-v0)
    assert ev_neg.min_pair_sum < 0.0
    assert ev_neg.omega[~prob.lattice.is_boundary].max() == 0.0


def test_tiling_identity_at_solution(s5_mid):
    prob, res = s5_mid
    assert res.converged
    ev = res.final_eval
    assert prob.system.mass_error(ev) <= 1e-10 * prob.total_mass
    assert ev.omega.min() > 0.0
    # The dropped equation is implied up to the gap between the cell masses
    # and the target mass (a right-hand-side quadrature artifact).
    gap = abs(prob.total_mass - prob.mu.sum())
    assert prob.system.pinned_equation_error(ev) <= \
        gap + 1e-9 * prob.total_mass


def test_jacobian_matches_finite_differences_single_seed(s5_coarse):
    prob = s5_coarse
    u0 = prob.system.unknowns(initial_quadratic(prob))
    u = perturbed_start(prob.system, u0, seed=3)
    chk = compare_jacobian(prob.system, u, step=1e-6)
    assert chk.max_rel_err <= 1e-5
    assert chk.frac_flagged <= 0.02


def test_jacobian_sparsity_is_local(s5_coarse):
    prob = s5_coarse
    values = noisy_quadratic(prob, 5)
    u = prob.system.unknowns(values)
    _, ev = prob.system.residual(u, want_jacobian=True)
    J = prob.system.jacobian(ev).tocsr()
    row_of, free = prob.system.row_of, prob.system.free
    for r in range(J.shape[0]):
        f = free[r]
        allowed = {r} | {int(row_of[t]) for t in ev.tgt[f] if row_of[t] >= 0}
        cols = set(J.indices[J.indptr[r]:J.indptr[r + 1]].tolist())
        assert cols <= allowed


def test_wcdd_diagnostic_small_matrices():
    ok = wcdd_diagnostic(sp.csr_matrix(np.array([[2.0, -1.0], [-1.0, 2.0]])))
    assert ok.ok and ok.n_strict == 2 and ok.n_unreached == 0
    chained = wcdd_diagnostic(sp.csr_matrix(
        np.array([[1.0, -1.0, 0.0], [-0.5, 2.0, -1.0], [0.0, -1.0, 1.0]])))
    assert chained.ok and chained.n_strict == 1 and chained.max_path_length == 1
    broken = wcdd_diagnostic(sp.csr_matrix(np.array([[1.0, -1.0], [-1.0, 1.0]])))
    assert not broken.ok and broken.n_unreached == 2
    bad_row = wcdd_diagnostic(sp.csr_matrix(np.array([[1.0, -2.0], [0.0, 1.0]])))
    assert not bad_row.weakly_dominant and not bad_row.ok


def test_target_violation_detects_escaping_gradients(s5_coarse):
    prob = s5_coarse
    v0 = initial_quadratic(prob)
    ev = prob.assembler.evaluate(v0, want_polygons=True)
    assert max_target_violation(ev, prob.spec.target) <= 1e-12
    # Tripling the potential pushes slopes outside the target polygon.
    ev3 = prob.assembler.evaluate(3.0 * v0, want_polygons=True)
    assert max_target_violation(ev3, prob.spec.target) > 1e-3


def _solve_both_gauges(spec, h):
    out = {}
    for pinning in ("pinned", "augmented"):
        prob = build_system(spec, h, pinning=pinning)
        u0 = prob.system.unknowns(initial_quadratic(prob))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            out[pinning] = (prob, damped_newton(prob.system, u0,
                                                NewtonConfig(mode="experiment")))
    assert all(res.converged for _, res in out.values())
    return out


def test_gauge_fixing_modes_agree_on_balanced_data(toy_spec):
    # Manufactured cell masses sum to the target mass exactly, so both
    # gauges solve the same system and the scaling unknown vanishes.
    out = _solve_both_gauges(toy_spec, 0.25)
    dv = np.abs(out["pinned"][1].values - out["augmented"][1].values)
    assert dv.max() <= 1e-12
    assert abs(out["augmented"][1].unknowns[-1]) <= 1e-12


def test_gauge_scaling_unknown_absorbs_quadrature_gap(s5_spec):
    # With an integrated right-hand side the cell masses miss the target
    # mass by the quadrature gap; the scaling unknown converges to it and
    # the two gauges differ by the correspondingly perturbed source.
    out = _solve_both_gauges(s5_spec, 1.0 / 8.0)
    prob, res = out["augmented"]
    gap = prob.total_mass - prob.mu.sum()
    assert res.unknowns[-1] == pytest.approx(gap, rel=1e-3)
    dv = np.abs(out["pinned"][1].values - res.values)
    assert dv.max() <= 1e-3


def test_mesh_function_validates_shape(s5_coarse):
    lat = s5_coarse.lattice
    MeshFunction(lat, np.zeros(lat.n_points))
    with pytest.raises(ValueError):
        MeshFunction(lat, np.zeros(lat.n_points + 1))
