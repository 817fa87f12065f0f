"""Solve drivers, the mesh-refinement study, and artifact writers.

Output artifacts are plain text with fixed formatting so repeated runs of
the same configuration produce identical bytes; the per-iteration wall time
in the trace is the one field that varies between runs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .measure import MeasureEval
from .newton import NewtonConfig, NewtonResult, damped_newton
from .problems import (DiscreteProblem, ProblemSpec, build_system,
                       closure_errors, initial_quadratic)

CSV_HEADER = "h,max_error,rate,iterations,final_residual"


@dataclass
class SolveReport:
    problem: DiscreteProblem
    result: NewtonResult
    max_error: float | None     # max nodal deviation from the exact potential


@dataclass
class ConvergenceRow:
    h: float
    max_error: float
    rate: float | None          # log2(previous error / this error); first row blank
    iterations: int
    final_residual: float
    converged: bool = True
    note: str = ""


def solve_problem(prob: DiscreteProblem, cfg: NewtonConfig,
                  v0: np.ndarray | None = None) -> SolveReport:
    """Run the damped Newton iteration from the quadratic guess (or v0)."""
    if v0 is None:
        v0 = initial_quadratic(prob)
    res = damped_newton(prob.system, prob.system.unknowns(v0), cfg)
    err = None
    if prob.spec.exact is not None:
        err = float(closure_errors(prob, res.values).max())
    return SolveReport(prob, res, err)


def run_convergence(spec: ProblemSpec, exponents, *, pinning: str = "pinned",
                    epsilon_factor: float = 0.49,
                    cfg: NewtonConfig | None = None,
                    callback=None) -> list[ConvergenceRow]:
    """Solve at h = 2^-k for each exponent k and tabulate errors and rates.

    A failed level is recorded with the error of whatever iterate the solver
    stopped at and a note; later levels still run, with the rate restarted.
    """
    if cfg is None:
        cfg = NewtonConfig(mode="experiment")
    rows: list[ConvergenceRow] = []
    prev_err: float | None = None
    for k in exponents:
        h = 2.0 ** -int(k)
        try:
            prob = build_system(spec, h, pinning=pinning,
                                epsilon_factor=epsilon_factor)
            rep = solve_problem(prob, cfg)
        except Exception as exc:
            rows.append(ConvergenceRow(h, math.nan, None, 0, math.nan,
                                       converged=False, note=str(exc)))
            prev_err = None
            continue
        err = rep.max_error if rep.max_error is not None else math.nan
        rate = None
        if prev_err is not None and err > 0.0 and math.isfinite(err):
            rate = math.log2(prev_err / err)
        row = ConvergenceRow(h, err, rate, rep.result.iterations,
                             rep.result.final_residual,
                             converged=rep.result.converged,
                             note=rep.result.trace.failure or "")
        rows.append(row)
        prev_err = err if math.isfinite(err) else None
        if callback is not None:
            callback(row, rep)
    return rows


# -- writers ----------------------------------------------------------------

def format_convergence_csv(rows) -> str:
    lines = [CSV_HEADER]
    for r in rows:
        rate = "" if r.rate is None else f"{r.rate:.6f}"
        lines.append(f"{r.h:.10g},{r.max_error:.6e},{rate},"
                     f"{r.iterations},{r.final_residual:.6e}")
    return "\n".join(lines) + "\n"


def write_convergence_csv(rows, path) -> Path:
    path = Path(path)
    path.write_text(format_convergence_csv(rows))
    return path


def read_convergence_csv(path) -> list[ConvergenceRow]:
    lines = Path(path).read_text().strip().split("\n")
    if lines[0] != CSV_HEADER:
        raise ValueError(f"unexpected header {lines[0]!r}")
    rows = []
    for line in lines[1:]:
        h, err, rate, iters, res = line.split(",")
        rows.append(ConvergenceRow(float(h), float(err),
                                   float(rate) if rate else None,
                                   int(iters), float(res)))
    return rows


def trace_records(trace) -> list[dict]:
    return [{
        "k": rec.k,
        "residual_norm": rec.residual_norm,
        "i_k": rec.i_k,
        "step_norm": rec.step_norm,
        "backtracks": rec.backtracks,
        "wall_time_ms": rec.wall_time_ms,
    } for rec in trace.iterations]


def write_trace_jsonl(trace, path) -> Path:
    path = Path(path)
    with path.open("w") as f:
        for rec in trace_records(trace):
            f.write(json.dumps(rec) + "\n")
    return path


def write_solution_csv(prob: DiscreteProblem, values: np.ndarray, path) -> Path:
    path = Path(path)
    lines = ["x,y,value"]
    for (x, y), v in zip(prob.lattice.points, values):
        lines.append(f"{x:.12g},{y:.12g},{v:.12e}")
    path.write_text("\n".join(lines) + "\n")
    return path


def write_polygons_jsonl(prob: DiscreteProblem, ev: MeasureEval, path) -> Path:
    """One record per lattice point: subdifferential vertices, omega, mu."""
    if ev.verts is None or ev.counts is None:
        raise ValueError("evaluation was made without polygon capture")
    path = Path(path)
    with path.open("w") as f:
        for i in range(prob.lattice.n_points):
            c = int(ev.counts[i])
            rec = {
                "index": i,
                "vertices": [[float(x), float(y)] for x, y in ev.verts[i, :c]],
                "omega": float(ev.omega[i]),
                "mu": float(prob.mu[i]),
            }
            f.write(json.dumps(rec) + "\n")
    return path
