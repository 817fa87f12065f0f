"""Command line interface.

Subcommands: solve, convergence, check-jacobian, check-invariants,
dump-polygons. Settings merge in fixed precedence: built-in defaults, then
a config file (flat key=value lines; all ten keys required), then explicit
command line flags. Exit codes: 0 success, 1 solver or check failure, 2
invalid configuration.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path

from . import plots, runner
from .lattice import LatticeError, StencilError
from .measure import max_target_violation
from .newton import NewtonConfig
from .oracles import compare_jacobian, perturbed_start
from .problems import ProblemError, build_system, builtin_problem, initial_quadratic

CONFIG_KEYS = ("problem", "h", "delta", "rho", "epsilon_factor", "mode",
               "max_iterations", "residual_tolerance", "seed", "output_dir")

JACOBIAN_REL_TOL = 1e-5
JACOBIAN_MAX_FLAGGED = 0.02
MASS_REL_TOL = 1e-5
CONTAINMENT_TOL = 1e-8


class ConfigError(ValueError):
    pass


def parse_h(text) -> float:
    """Mesh length given as a fraction '1/64', a power '2^-6', or a float."""
    t = str(text).strip()
    try:
        if "/" in t:
            val = float(Fraction(t))
        elif "^" in t:
            base, exp = t.split("^", 1)
            val = float(base) ** float(exp)
        else:
            val = float(t)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"cannot parse mesh length {text!r}") from exc
    if not val > 0.0:
        raise ConfigError(f"mesh length must be positive, got {text!r}")
    return val


def _coerce(key: str, raw: str):
    try:
        if key in ("delta", "residual_tolerance"):
            return None if raw.lower() in ("auto", "none", "") else float(raw)
        if key == "h":
            return parse_h(raw)
        if key in ("rho", "epsilon_factor"):
            return float(raw)
        if key in ("max_iterations", "seed"):
            return int(raw)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    if key == "mode" and raw not in ("theory", "experiment"):
        raise ConfigError(f"bad value for mode: {raw!r} "
                          f"(expected theory or experiment)")
    return raw


def load_config(path) -> dict:
    """Parse a key=value config file; every key in CONFIG_KEYS is required."""
    seen = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for ln, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{ln}: expected key=value, got {line!r}")
        key, _, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{path}:{ln}: unknown config key {key!r}")
        if key in seen:
            raise ConfigError(f"{path}:{ln}: duplicate config key {key!r}")
        seen[key] = _coerce(key, raw)
    for key in CONFIG_KEYS:
        if key not in seen:
            raise ConfigError(f"{path}: missing key: {key}")
    return seen


@dataclass
class Settings:
    problem: str = "s5"
    h: float = 1.0 / 32.0
    delta: float | None = None
    rho: float = 0.5
    epsilon_factor: float = 0.49
    mode: str = "experiment"
    max_iterations: int = 100
    residual_tolerance: float | None = None
    seed: int = 0
    output_dir: str = "out"
    pinning: str = "pinned"
    plots: bool = True


def settings_from(args, base: Settings | None = None) -> Settings:
    st = base or Settings()
    if getattr(args, "config", None):
        st = replace(st, **load_config(args.config))
    overrides = {}
    for key in ("problem", "mode", "delta", "rho", "epsilon_factor",
                "max_iterations", "residual_tolerance", "seed",
                "output_dir", "pinning"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    if getattr(args, "h", None) is not None:
        overrides["h"] = parse_h(args.h)
    if getattr(args, "no_plots", False):
        overrides["plots"] = False
    return replace(st, **overrides)


def _newton_config(st: Settings, **extra) -> NewtonConfig:
    return NewtonConfig(mode=st.mode, delta=st.delta, rho=st.rho,
                        max_iterations=st.max_iterations,
                        residual_tolerance=st.residual_tolerance, **extra)


def _build(st: Settings):
    spec = builtin_problem(st.problem)
    prob = build_system(spec, st.h, pinning=st.pinning,
                        epsilon_factor=st.epsilon_factor)
    return spec, prob


def _outdir(st: Settings) -> Path:
    out = Path(st.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_solve(args) -> int:
    st = settings_from(args)
    _, prob = _build(st)
    rep = runner.solve_problem(prob, _newton_config(st))
    out = _outdir(st)
    files = [runner.write_solution_csv(prob, rep.result.values,
                                       out / "solution.csv"),
             runner.write_trace_jsonl(rep.result.trace, out / "trace.jsonl")]
    if st.plots:
        f = plots.plot_trace(rep.result.trace, out / "trace.png")
        if f:
            files.append(f)
    print(f"problem={st.problem} h={st.h:.10g} mode={st.mode} "
          f"pinning={st.pinning} points={prob.lattice.n_points}")
    print(f"converged={rep.result.converged} iterations={rep.result.iterations} "
          f"final_residual={rep.result.final_residual:.6e}")
    if rep.max_error is not None:
        print(f"max_error={rep.max_error:.6e}")
    if rep.result.trace.failure:
        print(f"failure: {rep.result.trace.failure}", file=sys.stderr)
    print("wrote " + " ".join(str(f) for f in files))
    return 0 if rep.result.converged else 1


def cmd_convergence(args) -> int:
    st = settings_from(args)
    if args.h_max < args.h_min:
        raise ConfigError("--h-max must be at least --h-min")
    spec = builtin_problem(st.problem)
    rows = runner.run_convergence(spec, range(args.h_min, args.h_max + 1),
                                  pinning=st.pinning,
                                  epsilon_factor=st.epsilon_factor,
                                  cfg=_newton_config(st))
    out = _outdir(st)
    files = [runner.write_convergence_csv(rows, out / "convergence.csv")]
    if st.plots:
        f = plots.plot_convergence(rows, out / "convergence.png")
        if f:
            files.append(f)
    print(runner.format_convergence_csv(rows), end="")
    for r in rows:
        if not r.converged:
            print(f"level h={r.h:.10g} failed: {r.note}", file=sys.stderr)
    print("wrote " + " ".join(str(f) for f in files))
    return 0 if all(r.converged for r in rows) else 1


def cmd_check_jacobian(args) -> int:
    st = settings_from(args, base=Settings(h=1.0 / 8.0))
    _, prob = _build(st)
    v0 = initial_quadratic(prob)
    u0 = prob.system.unknowns(v0)
    ok = True
    for t in range(args.perturbations):
        u = perturbed_start(prob.system, u0, seed=st.seed + t)
        chk = compare_jacobian(prob.system, u, step=args.step)
        good = (chk.max_rel_err <= JACOBIAN_REL_TOL
                and chk.frac_flagged <= JACOBIAN_MAX_FLAGGED)
        ok = ok and good
        print(f"perturbation {t}: max_rel_err={chk.max_rel_err:.3e} "
              f"flagged={chk.n_flagged}/{chk.n_entries} "
              f"({100.0 * chk.frac_flagged:.2f}%) "
              f"{'PASS' if good else 'FAIL'}")
    print(f"jacobian check: {'PASS' if ok else 'FAIL'} "
          f"(tolerance {JACOBIAN_REL_TOL:g}, "
          f"flagged limit {100.0 * JACOBIAN_MAX_FLAGGED:.0f}%)")
    return 0 if ok else 1


def cmd_check_invariants(args) -> int:
    st = settings_from(args)
    spec, prob = _build(st)
    rep = runner.solve_problem(prob, _newton_config(st, record_wcdd=True))
    if not rep.result.converged:
        print(f"solver failed: {rep.result.trace.failure}", file=sys.stderr)
        return 1
    _, ev = prob.system.residual(rep.result.unknowns, want_polygons=True)

    # The tiling identity presumes an admissible iterate; bootstrap steps
    # taken before the residual enters the margin set are exempt.
    mass_errs = [prob.system.mass_error(ev)]
    n_adm = 0
    for rec in rep.result.trace.iterations:
        hit = [t for t in rec.trials if t.accepted]
        if hit and hit[0].admissible:
            mass_errs.append(rec.mass_error)
            n_adm += 1
    mass_bound = MASS_REL_TOL * prob.total_mass
    mass_ok = max(mass_errs) <= mass_bound

    violation = max_target_violation(ev, spec.target)
    contain_ok = violation <= CONTAINMENT_TOL

    wcdd = [rec.wcdd for rec in rep.result.trace.iterations]
    wcdd_ok = all(w is not None and w.ok for w in wcdd)

    print(f"mass conservation: max |sum omega - total| = {max(mass_errs):.3e} "
          f"over {n_adm} admissible iterates + solution "
          f"(bound {mass_bound:.3e}) {'PASS' if mass_ok else 'FAIL'}")
    print(f"containment: max overshoot past target boundary = {violation:.3e} "
          f"(bound {CONTAINMENT_TOL:g}) {'PASS' if contain_ok else 'FAIL'}")
    print(f"diagonal dominance with chain: {len(wcdd)} iterates checked "
          f"{'PASS' if wcdd_ok else 'FAIL'}")
    print(f"anchored-point equation residual: "
          f"{prob.system.pinned_equation_error(ev):.3e}")
    return 0 if (mass_ok and contain_ok and wcdd_ok) else 1


def cmd_dump_polygons(args) -> int:
    st = settings_from(args)
    _, prob = _build(st)
    rep = runner.solve_problem(prob, _newton_config(st))
    _, ev = prob.system.residual(rep.result.unknowns, want_polygons=True)
    out = _outdir(st)
    path = runner.write_polygons_jsonl(prob, ev, out / "polygons.jsonl")
    print(f"converged={rep.result.converged} "
          f"points={prob.lattice.n_points}")
    print(f"wrote {path}")
    return 0 if rep.result.converged else 1


def _add_common(sp, with_h=True):
    sp.add_argument("--config", help="key=value settings file")
    sp.add_argument("--problem", help="built-in problem name (s5, toy)")
    if with_h:
        sp.add_argument("--h", help="mesh length: 1/64, 2^-6, or a float")
    sp.add_argument("--mode", choices=("theory", "experiment"),
                    help="damping regime (default experiment)")
    sp.add_argument("--delta", type=float, help="damping parameter")
    sp.add_argument("--rho", type=float, help="backtracking ratio")
    sp.add_argument("--epsilon-factor", type=float, dest="epsilon_factor",
                    help="admissibility margin factor")
    sp.add_argument("--max-iterations", type=int, dest="max_iterations")
    sp.add_argument("--residual-tolerance", type=float,
                    dest="residual_tolerance")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--output-dir", dest="output_dir")
    sp.add_argument("--pinning", choices=("pinned", "augmented"),
                    help="gauge fixing: drop the anchored equation or add "
                         "the source-scaling unknown")
    sp.add_argument("--no-plots", action="store_true",
                    help="skip figure rendering")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="macone",
        description="Prescribed gradient-image solver on lattice meshes")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", help="solve one problem, write values + trace")
    _add_common(sp)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("convergence", help="mesh refinement sweep")
    _add_common(sp, with_h=False)
    sp.add_argument("--h-min", type=int, default=5, dest="h_min",
                    help="coarsest level k, h = 2^-k (default 5)")
    sp.add_argument("--h-max", type=int, default=7, dest="h_max",
                    help="finest level k (default 7)")
    sp.set_defaults(func=cmd_convergence)

    sp = sub.add_parser("check-jacobian",
                        help="analytic vs finite-difference derivative check")
    _add_common(sp)
    sp.add_argument("--perturbations", type=int, default=5)
    sp.add_argument("--step", type=float, default=1e-6)
    sp.set_defaults(func=cmd_check_jacobian)

    sp = sub.add_parser("check-invariants",
                        help="mass conservation, containment, dominance chain")
    _add_common(sp)
    sp.set_defaults(func=cmd_check_invariants)

    sp = sub.add_parser("dump-polygons",
                        help="per-point subdifferential polygons as JSONL")
    _add_common(sp)
    sp.set_defaults(func=cmd_dump_polygons)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ProblemError, LatticeError, StencilError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
