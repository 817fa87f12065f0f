"""Shared fixtures: problem specs, solved instances, and reference integrals."""

from __future__ import annotations

import warnings

import numpy as np
import pytest

from macone import (NewtonConfig, build_system, builtin_problem, damped_newton,
                    initial_quadratic)


@pytest.fixture(scope="session")
def s5_spec():
    return builtin_problem("s5")


@pytest.fixture(scope="session")
def toy_spec():
    return builtin_problem("toy")


@pytest.fixture(scope="session")
def s5_coarse(s5_spec):
    return build_system(s5_spec, 1.0 / 8.0)


def solve_instrumented(prob, **cfg_kwargs):
    """Experiment-mode solve from the quadratic guess, full trace recording.

    The quadratic guess sits outside the admissibility margin, so the driver
    warns and proceeds on residual decrease; the warning is expected here.
    """
    cfg = NewtonConfig(mode="experiment", record_vectors=True,
                       record_wcdd=True, **cfg_kwargs)
    u0 = prob.system.unknowns(initial_quadratic(prob))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return damped_newton(prob.system, u0, cfg)


@pytest.fixture(scope="session")
def s5_mid(s5_spec):
    """Gaussian-density problem at h = 1/32, solved with instrumentation."""
    prob = build_system(s5_spec, 1.0 / 32.0)
    return prob, solve_instrumented(prob)


@pytest.fixture(scope="session")
def toy_solved(toy_spec):
    """Manufactured problem at h = 1/4 (3x3 interior points), solved."""
    prob = build_system(toy_spec, 0.25)
    return prob, solve_instrumented(prob)


def greens_monomial_integral(vertices, a, b, npts=12) -> float:
    """Integral of x^a y^b over a convex polygon, by the divergence theorem.

    Independent of the triangle rules under test: each edge contributes the
    line integral of x^(a+1) y^b / (a+1) dy, evaluated with a 1D Gauss rule
    exact far beyond the polynomial degrees checked.
    """
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    if float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)) < 0.0:
        v = v[::-1]
    t, w = np.polynomial.legendre.leggauss(npts)
    total = 0.0
    for i in range(len(v)):
        p, q = v[i], v[(i + 1) % len(v)]
        mid, half = 0.5 * (p + q), 0.5 * (q - p)
        xs = mid[0] + t * half[0]
        ys = mid[1] + t * half[1]
        total += float(np.sum(w * xs ** (a + 1) * ys ** b)) / (a + 1) * half[1]
    return total


@pytest.fixture(scope="session")
def monomial_integral():
    return greens_monomial_integral
