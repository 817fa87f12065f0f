"""Finite-difference solver for Monge-Ampere equations with a prescribed
gradient image (second boundary value problem).

The discretization represents the unknown convex potential by its values on
a lattice inside the source polygon, extends it outside by the asymptotic
cone of the target, and equates the density-weighted area of each discrete
subdifferential with the local source mass. The resulting nonlinear system
is solved by a damped Newton method whose line search keeps every iterate
inside the admissible set where the system matrix is invertible.
"""

from .geometry import (ConvexPolygon, Halfplane, Segment, area, centroid,
                       clip_halfplane, contains, edge_halfplanes,
                       facet_segment, intersect_halfplanes, polygon)
from .lattice import (ExtensionBatch, Lattice, LatticeError, Stencil,
                      StencilError, build_lattice, build_stencil,
                      closure_points, extend_value, neighbor_value,
                      partition_cells)
from .measure import (Assembler, AugmentedSystem, MeasureEval, MeshFunction,
                      PinnedSystem, WcddReport, max_target_violation,
                      subdifferential, subdifferential_polygon,
                      wcdd_diagnostic)
from .newton import (InadmissibleStartError, LinearSolveError, NewtonConfig,
                     NewtonResult, NewtonTrace, damped_newton, solve_linear)
from .oracles import (compare_jacobian, fd_jacobian, mc_measure_oracle,
                      perturbed_start)
from .problems import (DiscreteProblem, ProblemError, ProblemSpec,
                       build_system, builtin_problem, check_compatibility,
                       closure_errors, exact_values, initial_quadratic,
                       nodal_errors)
from .quadrature import (Density, SEGMENT_GAUSS4, TRIANGLE_DEGREE4,
                         TRIANGLE_DEGREE8, TRIANGLE_MIDPOINT, TRIANGLE_RULES,
                         constant_density, gauss_segment_rule,
                         gauss_triangle_rule, integrate_polygon,
                         integrate_segment)
from .runner import (ConvergenceRow, SolveReport, run_convergence,
                     solve_problem, write_convergence_csv,
                     write_polygons_jsonl, write_solution_csv,
                     write_trace_jsonl)

__version__ = "0.1.0"
