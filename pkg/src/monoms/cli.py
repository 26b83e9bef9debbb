"""Command-line case runner.

    monoms run <case> [--output DIR] [--seed N] [--quiet]
    monoms batch <dir> [--output DIR] [--jobs N]
    monoms repair-report <case>
    monoms export-basis <case> [--columns 0,5,7]

``<case>`` is a case file path or the name of a bundled case.  The exit
status is 2 for invalid case files or input data, 3 for assembly errors and
0 otherwise; divergence is reported in the output files, not through the
exit status.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import scipy.sparse as sps

from . import config as cfgmod
from .discretization import BoundarySpec, assemble, constant_dirichlet
from .errors import (AssemblyError, ConfigError, DataError, DivergenceError, MonomsError,
                     SpeFormatError)
from .export import write_field_csv, write_vtk
from .fields import lognormal_field, read_spe10, rotated_tensor, uniform_tensor
from .geometry import (build_cartesian_grid, build_support_regions, partition_uniform,
                       perturb_interior_nodes)
from .linalg import direct_solve, ilu0_factor, triple_product
from .monotone import DRIFT_TOL, am_operator, m_matrix_fine, nullspace_drift, repair_report
from .msrsb import (UNITY_TOL, connectivity_matrix, init_prolongation, restriction_cv,
                    restriction_galerkin, smooth_prolongation, write_basis)
from .solver import (bound_check, error_norms, iterative_multiscale, one_step_multiscale,
                     write_residual_csv)


EXIT_OK, EXIT_INVALID, EXIT_ASSEMBLY = 0, 2, 3


# --- pipeline pieces -------------------------------------------------------

def build_grid(cfg):
    grid = build_cartesian_grid(cfg.grid_extent, cfg.grid_counts)
    if cfg.grid_perturb > 0:
        grid = perturb_interior_nodes(grid, cfg.grid_perturb, cfg.grid_seed)
    return grid


def build_field(cfg, grid):
    if cfg.perm == "uniform":
        return uniform_tensor(cfg.perm_value * np.eye(grid.dim))
    if cfg.perm == "rotated":
        return rotated_tensor(cfg.perm_theta, cfg.perm_k1, cfg.perm_k2)
    if cfg.perm == "lognormal":
        return lognormal_field(grid, cfg.perm_seed, cfg.perm_mu, cfg.perm_sigma)
    path = Path(cfg.perm_path)
    if not path.is_file():
        raise FileNotFoundError(f"permeability file {str(path)!r} not found")
    field = read_spe10(path, cfg.perm_layers, tuple(cfg.perm_shape), cfg.perm_isotropic)
    if field.num_cells != grid.num_cells:
        raise DataError(f"permeability file gives {field.num_cells} cells, grid has {grid.num_cells}")
    return field


def boundary_spec(cfg):
    return BoundarySpec([("xmin", cfg.p_left), ("xmax", cfg.p_right)])


def build_basis(cfg, grid, A):
    """Partition, supports and the smoothed prolongation for matrix ``A``."""
    part = partition_uniform(grid, cfg.ratio)
    sup = build_support_regions(grid, part)
    P = smooth_prolongation(connectivity_matrix(A), init_prolongation(part), sup,
                            cfg.basis_omega, cfg.basis_tol, cfg.basis_max_sweeps)
    return part, P


def restriction_for(cfg, part, P):
    return restriction_cv(part) if cfg.restriction == "cv" else restriction_galerkin(P)


class Case:
    """All operators of one configuration, built once."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.grid = build_grid(cfg)
        self.field = build_field(cfg, self.grid)
        self.system = assemble(self.grid, self.field, boundary_spec(cfg), cfg.scheme, cfg.mpfa_boundary)
        A = self.system.matrix
        self.A_basis = m_matrix_fine(A) if cfg.fine_repair else A
        self.partition, self.P = build_basis(cfg, self.grid, self.A_basis)
        self.R = restriction_for(cfg, self.partition, self.P)
        self.A_c = triple_product(self.R.matrix, A, self.P.matrix)
        self.A_m = am_operator(self.A_c, cfg.epsilon, cfg.weight) if cfg.coarse_repair else self.A_c


def _census(b):
    return {"below": b.below, "above": b.above, "worst_below": b.worst_below, "worst_above": b.worst_above,
            "violations": b.violations, "below_cells": b.below_cells, "above_cells": b.above_cells}


def _solve(cfg, A, q, P, R, op, factors, ref, part):
    """One-step or iterative solve plus its diagnostics."""
    out = {}
    if cfg.mode == "one-step":
        p = one_step_multiscale(A, q, P, R, op)
    else:
        kwargs = {}
        if cfg.finalize_cv and R.kind != "cv":
            Rcv = restriction_cv(part)
            kwargs = {"cv_restriction": Rcv}
        try:
            p, rep = iterative_multiscale(A, q, P, R, op, cfg.smoothing_steps, cfg.tol, cfg.max_cycles,
                                          finalize_cv=cfg.finalize_cv, factors=factors, **kwargs)
            out.update(residuals=rep.residuals, iterations=rep.iterations, converged=rep.converged,
                       diverged=False)
        except DivergenceError as exc:
            out.update(residuals=[float(r) if np.isfinite(r) else None for r in exc.history],
                       iterations=len(exc.history), converged=False, diverged=True)
            return None, out
    out["bounds"] = _census(bound_check(p, min(cfg.p_left, cfg.p_right), max(cfg.p_left, cfg.p_right)))
    if ref is not None:
        out["error_l2"], out["error_linf"] = error_norms(ref, p)
    return p, out


def sanity_checks(case) -> dict:
    """Cheap invariants of the operators built for a case."""
    cfg, grid, P = case.cfg, case.grid, case.P.matrix
    checks = {}
    unity = np.abs(np.asarray(P.sum(axis=1)).ravel() - 1.0).max()
    checks["partition_of_unity"] = {"error": float(unity), "tol": UNITY_TOL, "pass": bool(unity <= UNITY_TOL)}
    if cfg.coarse_repair:
        drift = nullspace_drift(case.A_c, case.A_m)
        bound = DRIFT_TOL * float(np.abs(case.A_c.diagonal()).max())
        checks["nullspace_drift"] = {"value": drift, "bound": bound, "pass": bool(drift <= bound)}
    # constant Dirichlet data must be reproduced by the one-step solve
    const = 1.0
    sys_c = assemble(grid, case.field, constant_dirichlet(grid, const), cfg.scheme, cfg.mpfa_boundary)
    op = triple_product(case.R.matrix, sys_c.matrix, P)
    if cfg.coarse_repair:
        op = am_operator(op, cfg.epsilon, cfg.weight)
    p = one_step_multiscale(sys_c.matrix, sys_c.rhs, P, case.R, op)
    err = float(np.abs(p - const).max() / const)
    checks["constant_reproduction"] = {"error": err, "tol": 1e-10, "pass": bool(err <= 1e-10)}
    return checks


def run_case(cfg, output=None, quiet: bool = True) -> dict:
    """Run one configuration, write its files and return the report dictionary."""
    t0 = time.perf_counter()
    timing = {}
    outdir = Path(output or cfg.output or Path("out") / cfg.name)
    outdir.mkdir(parents=True, exist_ok=True)
    try:
        case = Case(cfg)
    except DivergenceError as exc:
        # basis construction broke down: report it, this is not a usage error
        report = {"case": cfg.name, "config": cfg.to_dict(),
                  "result": {"diverged": True, "converged": False, "error": str(exc)},
                  "files": ["report.json"]}
        with open(outdir / "report.json", "w") as fh:
            json.dump(report, fh, indent=2)
        if not quiet:
            print(f"case {cfg.name}: {exc}")
        return report
    timing["setup"] = time.perf_counter() - t0
    A, q = case.system.matrix, case.system.rhs
    grid = case.grid

    report = {"case": cfg.name, "config": cfg.to_dict(), "num_cells": grid.num_cells,
              "num_blocks": case.partition.num_blocks, "block_counts": list(case.partition.block_counts),
              "basis": {"sweeps": case.P.iterations, "max_increment": case.P.max_increment,
                        "min_entry": float(case.P.matrix.data.min(initial=0.0)),
                        "max_entry": float(case.P.matrix.data.max(initial=0.0))}}
    report["repair"] = repair_report(case.A_c, cfg.epsilon, cfg.weight) if cfg.coarse_repair else None
    report["nullspace_drift"] = nullspace_drift(case.A_c, case.A_m)

    ref = None
    if grid.num_cells <= cfg.reference_limit:
        ref = direct_solve(A, q)
        report["reference"] = {"bounds": _census(bound_check(ref, min(cfg.p_left, cfg.p_right),
                                                             max(cfg.p_left, cfg.p_right)))}
    else:
        report["reference"] = None
        report["reference_skipped"] = f"{grid.num_cells} cells exceed reference_limit={cfg.reference_limit}"

    factors = ilu0_factor(A) if cfg.mode == "iterative" else None
    t1 = time.perf_counter()
    p, result = _solve(cfg, A, q, case.P, case.R, case.A_m, factors, ref, case.partition)
    timing["solve"] = time.perf_counter() - t1
    report["result"] = result
    if cfg.mode == "one-step" and case.R.kind == "cv":
        imbalance = case.R.matrix @ (q - A @ p)
        report["coarse_imbalance"] = {"max_abs": float(np.abs(imbalance).max()), "sum": float(imbalance.sum())}

    # same pipeline with every repair switched off, for comparison
    if cfg.baseline and cfg.repair != "off":
        base_cfg = cfg.replace(repair="off")
        try:
            if cfg.fine_repair:
                part, P0 = build_basis(base_cfg, grid, A)
                R0 = restriction_for(base_cfg, part, P0)
            else:
                part, P0, R0 = case.partition, case.P, case.R
            op0 = triple_product(R0.matrix, A, P0.matrix)
            _, base = _solve(base_cfg, A, q, P0, R0, op0, factors, ref, part)
            base["basis_sweeps"] = P0.iterations
        except (DivergenceError, MonomsError) as exc:
            base = {"error": f"{type(exc).__name__}: {exc}"}
        report["baseline"] = base

    report["checks"] = sanity_checks(case)

    files = []
    if p is not None:
        fields = {"pressure": p}
        if ref is not None:
            fields["reference"] = ref
            fields["error"] = p - ref
        write_vtk(grid, fields, outdir / "pressure.vtk", title=f"{cfg.name} pressure")
        write_field_csv(grid, fields, outdir / "pressure.csv")
        files += ["pressure.vtk", "pressure.csv"]
    if cfg.mode == "iterative":
        write_residual_csv([r if r is not None else float("nan") for r in result["residuals"]],
                           outdir / "residuals.csv")
        files.append("residuals.csv")
        if "baseline" in report and "residuals" in report["baseline"]:
            write_residual_csv([r if r is not None else float("nan") for r in report["baseline"]["residuals"]],
                               outdir / "baseline_residuals.csv")
            files.append("baseline_residuals.csv")
    files.append("report.json")
    report["files"] = files
    timing["total"] = time.perf_counter() - t0
    report["timing"] = timing
    with open(outdir / "report.json", "w") as fh:
        json.dump(report, fh, indent=2)
    if not quiet:
        print(summary(report))
    return report


def summary(report) -> str:
    res = report["result"]
    lines = [f"case {report['case']}: {report['num_cells']} cells, {report['num_blocks']} blocks"]
    if "iterations" in res:
        state = "diverged" if res["diverged"] else ("converged" if res["converged"] else "not converged")
        lines.append(f"  iterative: {state} after {res['iterations']} cycles")
    if "bounds" in res:
        lines.append(f"  bound violations: {res['bounds']['violations']}")
    if "error_l2" in res:
        lines.append(f"  error L2 {res['error_l2']:.4g}  Linf {res['error_linf']:.4g}")
    base = report.get("baseline")
    if base:
        if "error" in base:
            lines.append(f"  baseline failed: {base['error']}")
        else:
            parts = []
            if "iterations" in base:
                parts.append(f"{base['iterations']} cycles, converged={base['converged']}")
            if "bounds" in base:
                parts.append(f"{base['bounds']['violations']} violations")
            lines.append("  baseline (no repair): " + ", ".join(parts))
    failed = [k for k, v in report["checks"].items() if not v["pass"]]
    lines.append("  sanity checks: " + ("all pass" if not failed else "FAILED " + ", ".join(failed)))
    return "\n".join(lines)


def case_repair_report(cfg) -> dict:
    grid = build_grid(cfg)
    field = build_field(cfg, grid)
    A = assemble(grid, field, boundary_spec(cfg), cfg.scheme, cfg.mpfa_boundary).matrix
    out = {"case": cfg.name}
    A_basis = A
    if cfg.fine_repair:
        A_basis = m_matrix_fine(A)
        out["fine"] = {"positive_offdiagonals": int(((A - _diag(A)).data > 0).sum()),
                       "positive_offdiagonals_after": int(((A_basis - _diag(A_basis)).data > 0).sum()),
                       "nullspace_drift": nullspace_drift(A, A_basis)}
    part, P = build_basis(cfg, grid, A_basis)
    R = restriction_for(cfg, part, P)
    A_c = triple_product(R.matrix, A, P.matrix)
    out["coarse"] = repair_report(A_c, cfg.epsilon, cfg.weight)
    return out


def _diag(A):
    return sps.diags(A.diagonal())


def export_basis(cfg, output=None, columns=None) -> Path:
    grid = build_grid(cfg)
    A = assemble(grid, build_field(cfg, grid), boundary_spec(cfg), cfg.scheme, cfg.mpfa_boundary).matrix
    if cfg.fine_repair:
        A = m_matrix_fine(A)
    _, P = build_basis(cfg, grid, A)
    outdir = Path(output or cfg.output or Path("out") / cfg.name)
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / "basis.txt"
    write_basis(P, path, columns)
    return path


# --- command line ----------------------------------------------------------

def _load(path, seed):
    cfg = cfgmod.load_config(path)
    if seed is not None:
        cfg = cfg.replace(grid_seed=seed, perm_seed=seed)
    return cfg


def _exit_code(exc) -> int:
    if isinstance(exc, (ConfigError, DataError, SpeFormatError, FileNotFoundError, ValueError)):
        return EXIT_INVALID
    if isinstance(exc, AssemblyError):
        return EXIT_ASSEMBLY
    raise exc


def _run_one(args):
    path, output, seed = args
    try:
        cfg = _load(path, seed)
        run_case(cfg, output / cfg.name if output else None, quiet=True)
        return str(path), EXIT_OK, ""
    except Exception as exc:  # reported per case
        try:
            code = _exit_code(exc)
        except Exception:
            code = 1
        return str(path), code, f"{type(exc).__name__}: {exc}"


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="monoms", description="Monotone multiscale pressure solver")
    parser.add_argument("--quiet", action="store_true", help="suppress the summary")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--output", type=Path, help="output directory")
        p.add_argument("--seed", type=int, help="override every seed in the case")
        p.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)

    p_run = sub.add_parser("run", help="run one case")
    p_run.add_argument("case")
    common(p_run)
    p_batch = sub.add_parser("batch", help="run every .ini case in a directory")
    p_batch.add_argument("directory", type=Path)
    p_batch.add_argument("--jobs", type=int, default=1)
    common(p_batch)
    p_rep = sub.add_parser("repair-report", help="print repair diagnostics without solving")
    p_rep.add_argument("case")
    common(p_rep)
    p_basis = sub.add_parser("export-basis", help="write smoothed basis columns")
    p_basis.add_argument("case")
    p_basis.add_argument("--columns", help="comma separated column indices (default: all)")
    common(p_basis)
    sub.add_parser("list-cases", help="list the bundled cases")

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")

    if args.command == "list-cases":
        for name, path in sorted(cfgmod.bundled_cases().items()):
            print(f"{name}\t{path}")
        return EXIT_OK

    if args.command == "batch":
        paths = sorted(args.directory.glob("*.ini"))
        if not paths:
            print(f"no case files in {args.directory}", file=sys.stderr)
            return EXIT_INVALID
        jobs = [(p, args.output, args.seed) for p in paths]
        if args.jobs > 1:
            with ProcessPoolExecutor(args.jobs) as pool:
                results = list(pool.map(_run_one, jobs))
        else:
            results = [_run_one(j) for j in jobs]
        worst = EXIT_OK
        for path, code, msg in results:
            if not args.quiet or code:
                print(f"{path}: {'ok' if code == 0 else msg}")
            worst = max(worst, code)
        return worst

    try:
        cfg = _load(args.case, args.seed)
        if args.command == "run":
            run_case(cfg, args.output, quiet=args.quiet)
        elif args.command == "repair-report":
            print(json.dumps(case_repair_report(cfg), indent=2))
        elif args.command == "export-basis":
            cols = None if not args.columns else [int(c) for c in args.columns.split(",")]
            path = export_basis(cfg, args.output, cols)
            if not args.quiet:
                print(f"basis written to {path}")
    except Exception as exc:
        code = _exit_code(exc)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
