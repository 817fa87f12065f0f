"""Quadrature rules against an independent divergence-theorem reference."""

import numpy as np
import pytest

from macone import (Density, SEGMENT_GAUSS4, TRIANGLE_DEGREE4,
                    TRIANGLE_DEGREE8, TRIANGLE_MIDPOINT, TRIANGLE_RULES,
                    constant_density, gauss_segment_rule, gauss_triangle_rule,
                    integrate_polygon, integrate_segment, polygon)
from macone.geometry import EMPTY, Segment

UNIT = polygon([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])


def monomial_density(a, b):
    return Density(lambda p: p[:, 0] ** a * p[:, 1] ** b, f"x^{a} y^{b}")


def random_triangles(seed, n=4):
    rng = np.random.default_rng(seed)
    tris = []
    while len(tris) < n:
        v = rng.uniform(-1.0, 2.0, (3, 2))
        e1, e2 = v[1] - v[0], v[2] - v[0]
        cross = e1[0] * e2[1] - e1[1] * e2[0]
        if abs(cross) < 0.2:
            continue
        tris.append(polygon(v if cross > 0 else v[::-1]))
    return tris


def test_triangle_rule_normalization():
    for rule in TRIANGLE_RULES.values():
        assert abs(rule.weights.sum() - 1.0) <= 1e-14
        assert np.all(rule.barycentric >= -1e-14)
        assert np.allclose(rule.barycentric.sum(axis=1), 1.0, atol=1e-14)


def test_segment_rule_normalization():
    assert abs(SEGMENT_GAUSS4.weights.sum() - 2.0) <= 1e-14
    assert np.all(np.abs(SEGMENT_GAUSS4.nodes) <= 1.0)


def test_triangle_rules_exact_to_stated_degree(monomial_integral):
    for rule in TRIANGLE_RULES.values():
        for tri in random_triangles(17):
            for a in range(rule.degree + 1):
                for b in range(rule.degree + 1 - a):
                    ref = monomial_integral(tri.vertices, a, b)
                    got = integrate_polygon(tri, monomial_density(a, b),
                                            rule=rule)
                    assert abs(got - ref) <= 1e-13 * max(1.0, abs(ref)), \
                        f"{rule.name} inexact on x^{a} y^{b}"


def test_gauss_triangle_rule_construction():
    for degree in (2, 4, 6, 8):
        rule = gauss_triangle_rule(degree)
        assert rule.degree == degree
        assert np.all(rule.weights > 0.0)
        assert abs(rule.weights.sum() - 1.0) <= 1e-14


def test_segment_rule_exact_to_degree_7():
    for k in range(8):
        exact = 2.0 / (k + 1) if k % 2 == 0 else 0.0
        got = float(np.sum(SEGMENT_GAUSS4.weights * SEGMENT_GAUSS4.nodes ** k))
        assert abs(got - exact) <= 1e-13


def test_gauss_segment_rule_matches_legendre():
    nodes, weights = np.polynomial.legendre.leggauss(6)
    rule = gauss_segment_rule(6)
    assert np.allclose(rule.nodes, nodes, atol=1e-14)
    assert np.allclose(rule.weights, weights, atol=1e-14)


def test_integrate_segment_arclength():
    seg = Segment((0.0, 0.0), (3.0, 4.0))
    assert integrate_segment(seg, constant_density(2.0)) == pytest.approx(10.0)
    # Linear density integrates to the midpoint value times the length.
    lin = Density(lambda p: p[:, 0] + p[:, 1], "x+y")
    assert integrate_segment(seg, lin) == pytest.approx(3.5 * 5.0)


def test_integrate_polygon_constant_density():
    assert integrate_polygon(UNIT, constant_density(3.0)) == pytest.approx(3.0)
    assert integrate_polygon(EMPTY, constant_density(1.0)) == 0.0


def test_integrate_polygon_refinement_converges():
    gauss = Density(lambda p: np.exp(-0.5 * np.sum(p * p, axis=1)), "gaussian")
    ref = integrate_polygon(UNIT, gauss, rule=TRIANGLE_DEGREE8, refine=4)
    errs = [abs(integrate_polygon(UNIT, gauss, rule=TRIANGLE_MIDPOINT,
                                  refine=r) - ref) for r in (0, 2, 4)]
    assert errs[1] < errs[0] and errs[2] < errs[1]
    assert abs(integrate_polygon(UNIT, gauss, rule=TRIANGLE_DEGREE8,
                                 refine=2) - ref) <= 1e-11
    assert abs(integrate_polygon(UNIT, gauss, rule=TRIANGLE_DEGREE4,
                                 refine=4) - ref) <= 1e-10
