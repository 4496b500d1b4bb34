"""Command-line front end.

Usage::

    igatopo {solve,optimize,gradcheck,convergence,reconstruct} --config RUN.toml [--out DIR]
            [--levels N] [--epsilon X] [--voxel A] [--density CSV]

Exit status: 0 success, 1 runtime failure, 2 configuration error,
3 gradient check above tolerance.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config
from .design_field import read_density_csv, write_density_csv
from .errors import ConfigError, ObjectiveError, OptimizerError, ProjectionError, SolverError
from .export import sample_fields, write_fields_csv, write_vtk
from .geometry import quadrature_points
from .optimizer import gradient_audit, minimize, minimize_constrained
from .problem import TopOptProblem
from .reconstruct import reconstruct_and_trim, write_contours_csv, write_pgm

__all__ = ["main", "build_parser", "cmd_solve", "cmd_optimize", "cmd_gradcheck", "cmd_convergence", "cmd_reconstruct"]

log = logging.getLogger("igatopo")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG, EXIT_GRADCHECK = 0, 1, 2, 3
GRADCHECK_TOL = 1e-4
CONVERGENCE_THRESHOLD = 0.02
_RUNTIME_ERRORS = (SolverError, OptimizerError, ProjectionError, ObjectiveError)


def _build(cfg: RunConfig, levels=None) -> TopOptProblem:
    try:
        return TopOptProblem(cfg.problem_setup(levels))
    except _RUNTIME_ERRORS:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _initial(cfg: RunConfig, problem: TopOptProblem, density=None) -> np.ndarray:
    path = density or cfg.design.initial_csv
    if path is None:
        return problem.initial_point()
    try:
        coeffs = read_density_csv(problem.field, path)
        return problem.smap.restrict(coeffs)
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _outdir(cfg: RunConfig, out) -> Path:
    d = Path(out if out is not None else cfg.output.dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _export_fields(cfg, problem, x, out: Path):
    ev = problem.evaluate(x)
    T = ev.states["main"].T
    ref = problem.refs["main"].T_bar
    s = sample_fields(problem.model, T, problem.laws, problem.field, problem.coefficients(x), ref,
                      cfg.output.subdivisions)
    write_fields_csv(s, out / "fields.csv")
    if cfg.output.vtk:
        write_vtk(s, out / "fields.vtk")
    write_density_csv(problem.field, problem.coefficients(x), out / "density.csv")


def _format_terms(terms: dict) -> str:
    return " ".join(f"{k}={v:.6g}" for k, v in terms.items() if isinstance(v, float) and k != "J")


def cmd_solve(cfg: RunConfig, out=None, levels=None, density=None) -> int:
    problem = _build(cfg, levels)
    x = _initial(cfg, problem, density)
    ev = problem.evaluate(x)
    d = _outdir(cfg, out)
    _export_fields(cfg, problem, x, d)
    print(f"solve: n_dof={problem.n_dof} n_var={problem.n_var} J={ev.J:.6g} {_format_terms(ev.terms)}")
    for j, g in enumerate(ev.constraints):
        print(f"constraint g{j}={g:.6g}")
    return EXIT_OK


def cmd_optimize(cfg: RunConfig, out=None, levels=None, density=None) -> int:
    problem = _build(cfg, levels)
    x0 = _initial(cfg, problem, density)
    opt = cfg.optimizer.build()
    if problem.constraint_fns:
        res = minimize_constrained(problem.evaluate, x0, problem.lower, problem.upper, opt)
    else:
        res = minimize(problem.evaluate, x0, problem.lower, problem.upper, opt)
    d = _outdir(cfg, out)
    res.record.to_csv(d / "history.csv")
    _export_fields(cfg, problem, res.x, d)
    ev = problem.evaluate(res.x)
    print(f"optimize: stop={res.stop_reason} iterations={res.n_iterations} J={ev.J:.6g} {_format_terms(ev.terms)}")
    return EXIT_OK


def audit_point(problem: TopOptProblem, seed: int = 0) -> np.ndarray:
    """Deterministic interior point (10 % away from each bound)."""
    rng = np.random.default_rng(seed)
    lo, hi = problem.lower, problem.upper
    return lo + (hi - lo) * rng.uniform(0.1, 0.9, problem.n_var)


def cmd_gradcheck(cfg: RunConfig, epsilon: float = 1e-6, levels=None) -> int:
    problem = _build(cfg, levels)
    x = audit_point(problem)
    worst = 0.0
    res = gradient_audit(problem.evaluate, x, epsilon)
    print(f"gradcheck objective={cfg.objective.kind} discrepancy={res.discrepancy:.3e}")
    worst = max(worst, res.discrepancy)
    for j in range(len(problem.constraint_fns)):
        r = gradient_audit(problem.evaluate, x, epsilon, component=j)
        print(f"gradcheck constraint g{j} discrepancy={r.discrepancy:.3e}")
        worst = max(worst, r.discrepancy)
    ok = worst < GRADCHECK_TOL
    print(f"gradcheck {'PASS' if ok else 'FAIL'} max discrepancy {worst:.3e} (tolerance {GRADCHECK_TOL:g})")
    return EXIT_OK if ok else EXIT_GRADCHECK


def matched_level(cfg: RunConfig) -> int:
    """Coarsest refinement whose solution mesh on the design ring has as
    many spans as the density mesh."""
    return max(math.ceil(math.log2(cfg.design.spans_circ)), math.ceil(math.log2(cfg.design.spans_radial)), 0)


def convergence_study(cfg: RunConfig, max_level: int, start: int | None = None):
    """Optimize at every solution-mesh level and compare densities with the
    finest one (relative L2 over the design region).

    Returns rows ``(level, n_dof, error, J, stop_reason)``.
    """
    start = matched_level(cfg) if start is None else start
    if max_level - start < 1:
        raise ConfigError(f"convergence needs at least two levels; got {start}..{max_level}")
    runs = []
    problem = None
    for level in range(start, max_level + 1):
        problem = _build(cfg, level)
        x0 = _initial(cfg, problem)
        opt = cfg.optimizer.build()
        if problem.constraint_fns:
            res = minimize_constrained(problem.evaluate, x0, problem.lower, problem.upper, opt)
        else:
            res = minimize(problem.evaluate, x0, problem.lower, problem.upper, opt)
        runs.append((level, problem.n_dof, problem.coefficients(res.x), res.J, res.stop_reason))
    q = quadrature_points(problem.field.patch)
    B = problem.field.basis_matrix(q.xi, q.eta)
    v_ref = B @ runs[-1][2]
    norm = math.sqrt(float(np.sum(q.w * v_ref**2)))
    rows = []
    for level, n_dof, c, J, stop in runs:
        err = math.sqrt(float(np.sum(q.w * (B @ c - v_ref) ** 2))) / norm
        rows.append((level, n_dof, err, J, stop))
    return rows


def cmd_convergence(cfg: RunConfig, max_level: int | None = None, out=None) -> int:
    max_level = cfg.mesh.levels if max_level is None else max_level
    rows = convergence_study(cfg, max_level)
    d = _outdir(cfg, out)
    with open(d / "convergence.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["level", "n_dof", "relative_error", "J", "stop_reason", "within_2pct"])
        for level, n, e, J, s in rows:
            w.writerow([level, n, repr(e), repr(J), s, int(e < CONVERGENCE_THRESHOLD)])
    print(f"{'level':>5} {'n_dof':>7} {'rel. error':>11} {'J':>11}  <2%")
    for level, n, e, J, s in rows:
        print(f"{level:>5} {n:>7} {e:>11.3e} {J:>11.3e}  {'yes' if e < CONVERGENCE_THRESHOLD else 'no'}")
    print(f"threshold {CONVERGENCE_THRESHOLD:.0%} (finest level is the reference)")
    return EXIT_OK


def cmd_reconstruct(cfg: RunConfig, voxel: float, density=None, out=None, resolution: int = 16) -> int:
    problem = _build(cfg, 0)
    path = density or cfg.design.initial_csv
    if path is None:
        raise ConfigError("reconstruct needs a density CSV (--density or design.initial_csv)")
    try:
        coeffs = read_density_csv(problem.field, path)
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    try:
        rec = reconstruct_and_trim(problem.field, coeffs, voxel, resolution)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    d = _outdir(cfg, out)
    write_pgm(rec.domain, d / "domain.pgm")
    write_pgm(rec.tessellation, d / "tessellation.pgm")
    write_pgm(rec.trimmed, d / "trimmed.pgm")
    write_contours_csv(rec.contours, d / "contours.csv")
    g = rec.grid
    with open(d / "voxels.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "x", "y", "occupied", "v", "t"])
        cen = g.centers().reshape(g.ny, g.nx, 2)
        for j in range(g.ny):
            for i in range(g.nx):
                w.writerow([i, j, repr(float(cen[j, i, 0])), repr(float(cen[j, i, 1])), int(g.occupied[j, i]),
                            repr(float(g.v[j, i])), repr(float(g.t[j, i]))])
    print(f"reconstruct: {g.nx}x{g.ny} voxels, {int(g.occupied.sum())} occupied, "
          f"material fraction {rec.trimmed.sum() / max(rec.domain.sum(), 1):.4f}, {len(rec.contours)} contours")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="igatopo", description="Isogeometric topology optimization of thermal meta-structures")
    p.add_argument("command", choices=["solve", "optimize", "gradcheck", "convergence", "reconstruct"])
    p.add_argument("--config", required=True, help="run configuration (TOML)")
    p.add_argument("--out", help="output directory (default: output.dir of the config)")
    p.add_argument("--levels", type=int, help="refinement levels (max level for convergence)")
    p.add_argument("--epsilon", type=float, default=1e-6, help="finite-difference step for gradcheck")
    p.add_argument("--voxel", type=float, help="voxel size in mm for reconstruct")
    p.add_argument("--density", help="density CSV (initial design or reconstruction input)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.command == "solve":
            return cmd_solve(cfg, args.out, args.levels, args.density)
        if args.command == "optimize":
            return cmd_optimize(cfg, args.out, args.levels, args.density)
        if args.command == "gradcheck":
            return cmd_gradcheck(cfg, args.epsilon, args.levels)
        if args.command == "convergence":
            return cmd_convergence(cfg, args.levels, args.out)
        if args.voxel is None:
            raise ConfigError("reconstruct needs --voxel")
        return cmd_reconstruct(cfg, args.voxel, args.density, args.out)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (*_RUNTIME_ERRORS, ValueError, RuntimeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
