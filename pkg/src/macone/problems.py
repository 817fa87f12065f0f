"""Built-in problems and assembly of the discrete system for one mesh size.

A ProblemSpec is continuous data only: source and target polygons, the
density on the target, the source density (or an exact potential whose
discrete measure manufactures the right-hand side), and the stencil
generators. build_system turns a spec plus a mesh length into the lattice,
cells, right-hand side, and the nonlinear system handed to the Newton
driver.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .geometry import ConvexPolygon, area, boundary_distance, centroid, polygon
from .lattice import (ExtensionBatch, Lattice, Stencil, build_lattice,
                      build_stencil, closure_points, partition_cells)
from .measure import Assembler, AugmentedSystem, PinnedSystem
from .quadrature import (TRIANGLE_DEGREE4, TRIANGLE_MIDPOINT, Density,
                         constant_density, integrate_polygon)


class ProblemError(ValueError):
    pass


UNIT_SQUARE = polygon([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])

# Eight generators; closure under negation gives the 16-direction stencil.
GENERATORS_RICH = ((1, 0), (0, 1), (1, 1), (1, -1),
                   (2, 1), (-1, 2), (1, 2), (-2, 1))
GENERATORS_BASIC = ((1, 0), (0, 1), (1, 1), (1, -1))


@dataclass(frozen=True)
class ProblemSpec:
    """Continuous problem data; all callables act on (n, 2) point arrays."""

    name: str
    domain: ConvexPolygon
    target: ConvexPolygon
    density: Density                    # density on the target polygon
    source: Density | None              # density on the domain; None -> manufactured
    generators: tuple[tuple[int, int], ...]
    exact: Callable[[np.ndarray], np.ndarray] | None = None
    exact_gradient: Callable[[np.ndarray], np.ndarray] | None = None
    pin_value: float = 0.0
    description: str = ""


def _gaussian_problem() -> ProblemSpec:
    """Quadratic potential on the unit square with Gaussian densities.

    The potential u(x, y) = x^2/2 + xy + y^2 has constant Hessian with unit
    determinant, and its gradient maps the square onto the parallelogram with
    corners (0,0), (1,1), (2,3), (1,2). With R the standard Gaussian density
    on the target, the matching source is R composed with the gradient map.
    """
    target = polygon([(0.0, 0.0), (1.0, 1.0), (2.0, 3.0), (1.0, 2.0)])

    def u(p):
        return 0.5 * p[:, 0] ** 2 + p[:, 0] * p[:, 1] + p[:, 1] ** 2

    def du(p):
        return np.stack([p[:, 0] + p[:, 1], p[:, 0] + 2.0 * p[:, 1]], axis=1)

    def R(p):
        return np.exp(-0.5 * (p[:, 0] ** 2 + p[:, 1] ** 2))

    def f(p):
        g = du(p)
        return np.exp(-0.5 * (g[:, 0] ** 2 + g[:, 1] ** 2))

    return ProblemSpec(
        name="s5",
        domain=UNIT_SQUARE,
        target=target,
        density=Density(R, "gaussian"),
        source=Density(f, "gaussian-pushforward"),
        generators=GENERATORS_RICH,
        exact=u,
        exact_gradient=du,
        description="quadratic potential, Gaussian densities, 16 directions",
    )


def _toy_problem() -> ProblemSpec:
    """Small manufactured problem: the right-hand side is the discrete
    measure of a known quadratic, so that quadratic is the exact discrete
    solution and Newton must reach it to rounding accuracy."""
    target = polygon([(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)])

    def v(p):
        x, y = p[:, 0], p[:, 1]
        return 0.3 * (x - 0.4) ** 2 + 0.25 * (y - 0.55) ** 2 + 0.1 * x * y

    def dv(p):
        x, y = p[:, 0], p[:, 1]
        return np.stack([0.6 * (x - 0.4) + 0.1 * y,
                         0.5 * (y - 0.55) + 0.1 * x], axis=1)

    return ProblemSpec(
        name="toy",
        domain=UNIT_SQUARE,
        target=target,
        density=constant_density(1.0),
        source=None,
        generators=GENERATORS_BASIC,
        exact=v,
        exact_gradient=dv,
        description="manufactured quadratic, uniform density, 8 directions",
    )


_BUILTINS = {"s5": _gaussian_problem, "toy": _toy_problem}


def builtin_problem(name: str) -> ProblemSpec:
    try:
        return _BUILTINS[name]()
    except KeyError:
        raise ProblemError(
            f"unknown problem {name!r}; available: {sorted(_BUILTINS)}") from None


def check_compatibility(spec: ProblemSpec, rtol: float = 1e-6,
                        refine: int = 6) -> tuple[float, float]:
    """Total source mass vs total target mass, by high-order quadrature.

    Returns (source integral, target integral); raises if the relative gap
    exceeds rtol. Manufactured problems balance by construction and skip
    the source integral.
    """
    mass_t = integrate_polygon(spec.target, spec.density,
                               rule=TRIANGLE_DEGREE4, refine=refine)
    if spec.source is None:
        return mass_t, mass_t
    mass_s = integrate_polygon(spec.domain, spec.source,
                               rule=TRIANGLE_DEGREE4, refine=refine)
    gap = abs(mass_s - mass_t) / max(abs(mass_t), 1e-300)
    if gap > rtol:
        raise ProblemError(
            f"incompatible densities: source mass {mass_s:.12g} vs "
            f"target mass {mass_t:.12g} (relative gap {gap:.3e})")
    return mass_s, mass_t


@dataclass
class DiscreteProblem:
    """Everything tied to one mesh: lattice, cells, right-hand side, system."""

    spec: ProblemSpec
    h: float
    lattice: Lattice
    stencil: Stencil
    cells: list[ConvexPolygon]
    cell_areas: np.ndarray
    mu: np.ndarray
    total_mass: float
    assembler: Assembler
    system: PinnedSystem | AugmentedSystem
    epsilon: float
    pinning: str
    epsilon_factor: float


def build_system(spec: ProblemSpec, h: float, *, offset=(0.0, 0.0),
                 pinning: str = "pinned", epsilon_factor: float = 0.49,
                 compat_rtol: float | None = 1e-6) -> DiscreteProblem:
    """Assemble the discrete system for mesh length h.

    pinning "pinned" eliminates the anchored value and its equation;
    "augmented" keeps every equation and adds the scalar source-scaling
    unknown. The admissibility margin is epsilon_factor * h^2 * min over
    cells of mu_i / area(C_i).
    """
    if pinning not in ("pinned", "augmented"):
        raise ProblemError(f"unknown pinning {pinning!r}")
    if compat_rtol is not None:
        check_compatibility(spec, rtol=compat_rtol)

    lat = build_lattice(spec.domain, h, offset=offset)
    stencil = build_stencil(spec.generators, target=spec.target)
    cells = partition_cells(lat)
    areas = np.array([area(c) for c in cells])
    assembler = Assembler(lat, stencil, spec.target, spec.density)

    if spec.source is not None:
        mu = np.array([integrate_polygon(c, spec.source, rule=TRIANGLE_MIDPOINT)
                       for c in cells])
        total_mass = integrate_polygon(spec.target, spec.density,
                                       rule=TRIANGLE_DEGREE4, refine=4)
    else:
        if spec.exact is None:
            raise ProblemError("manufactured problem needs an exact potential")
        mu = assembler.evaluate(spec.exact(lat.points)).omega.copy()
        total_mass = float(mu.sum())

    if mu.min() <= 0.0:
        raise ProblemError(f"right-hand side has a nonpositive cell mass "
                           f"(min {mu.min():.3e})")
    epsilon = epsilon_factor * h * h * float((mu / areas).min())

    cls = PinnedSystem if pinning == "pinned" else AugmentedSystem
    system = cls(assembler, mu, areas, spec.pin_value, epsilon, total_mass)
    return DiscreteProblem(spec, float(h), lat, stencil, cells, areas, mu,
                           total_mass, assembler, system, epsilon, pinning,
                           epsilon_factor)


def initial_quadratic(prob: DiscreteProblem) -> np.ndarray:
    """Quadratic starting guess whose gradients stay inside the target.

    v0(x) = pbar . (x - xbar) + (sigma/2) |x - xbar|^2 with pbar the target
    centroid, xbar the domain centroid, and sigma sized so the gradient image
    covers at most 90 percent of the distance from pbar to the target
    boundary; shifted so the anchored point takes the anchored value.
    """
    pbar = centroid(prob.spec.target)
    xbar = centroid(prob.spec.domain)
    reach = float(np.linalg.norm(prob.spec.domain.vertices - xbar,
                                 axis=1).max())
    sigma = 0.9 * boundary_distance(prob.spec.target, pbar) / reach
    if sigma <= 0.0:
        raise ProblemError("target centroid is not interior to the target")
    d = prob.lattice.points - xbar
    vals = d @ pbar + 0.5 * sigma * np.sum(d * d, axis=1)
    vals += prob.spec.pin_value - vals[prob.lattice.pinned]
    return vals


def exact_values(prob: DiscreteProblem) -> np.ndarray:
    """Exact potential on the lattice, shifted to the anchored value."""
    if prob.spec.exact is None:
        raise ProblemError(f"problem {prob.spec.name!r} has no exact potential")
    vals = np.asarray(prob.spec.exact(prob.lattice.points), dtype=float)
    return vals + (prob.spec.pin_value - vals[prob.lattice.pinned])


def nodal_errors(prob: DiscreteProblem, values: np.ndarray) -> np.ndarray:
    return np.abs(np.asarray(values, dtype=float) - exact_values(prob))


def closure_errors(prob: DiscreteProblem, values: np.ndarray) -> np.ndarray:
    """Pointwise error on the mesh of the closed domain.

    Mesh points on the domain boundary carry no unknown; the discrete
    solution is evaluated there through the cone extension, matching how
    the scheme itself sees values beyond the open lattice.
    """
    if prob.spec.exact is None:
        raise ProblemError(f"problem {prob.spec.name!r} has no exact potential")
    values = np.asarray(values, dtype=float)
    pts, idx = closure_points(prob.lattice)
    vals = np.empty(len(pts))
    inside = idx >= 0
    vals[inside] = values[idx[inside]]
    if not inside.all():
        ext = ExtensionBatch(prob.lattice, prob.spec.target)
        vals[~inside] = ext(values, pts[~inside])[0]
    exact = np.asarray(prob.spec.exact(pts), dtype=float)
    pin_pt = prob.lattice.points[prob.lattice.pinned]
    exact += prob.spec.pin_value - float(
        np.asarray(prob.spec.exact(pin_pt[None, :]), dtype=float)[0])
    return np.abs(vals - exact)
