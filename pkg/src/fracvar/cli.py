"""Command-line front end: ``fracvar solve | convergence | residual``.

Exit codes: 0 success, 1 invalid input, 2 solver non-convergence (or a
failed convergence-study row). Data goes to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import io
import logging
import math
import sys

import numpy as np

from . import expression as ex
from .direct import SolverOptions, Trajectory, convergence_study, solve
from .fracops import OrderError
from .indirect import (
    convexity_check,
    el_residual,
    holonomic_residual,
    isoperimetric_residual,
    verdict,
)
from .problemfile import (
    ProblemFileError,
    SolutionFileError,
    check_grid,
    load_problem,
    read_solution,
    write_solution,
)
from .problems import HolonomicConstraint, IsoperimetricConstraint, Lagrangian

log = logging.getLogger("fracvar")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for non-convergence here
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _fmt(v, digits: int = 12) -> str:
    if v is None:
        return "none"
    s = f"{float(v):.{digits}g}"
    if s.lstrip("-").isdigit():
        s += ".0"
    return s


def _options(args, loaded) -> SolverOptions:
    tol = args.tol if args.tol is not None else loaded.solver.get("tol", 1e-9)
    max_iter = args.max_iter if args.max_iter is not None else loaded.solver.get("max_iter", 200)
    if not tol > 0:
        raise UsageError(f"--tol must be positive, got {tol}")
    if max_iter < 1:
        raise UsageError(f"--max-iter must be positive, got {max_iter}")
    return SolverOptions(tol=tol, max_iter=max_iter)


def cmd_solve(args) -> int:
    loaded = load_problem(args.problem)
    n = args.n if args.n is not None else loaded.solver.get("n")
    if n is None:
        raise UsageError("--n is required (or set n in the [solver] section)")
    if n < 2:
        raise UsageError(f"--n must be at least 2, got {n}")
    report = solve(loaded.problem, n, _options(args, loaded))
    traj = report.trajectory
    trailer = None
    if not report.converged:
        trailer = (
            f"not converged: {report.message}; iterations={report.iterations}; "
            f"gradient_norm={report.gradient_norm:.6g}"
        )
        log.warning("solver did not converge: %s", report.message)
    write_solution(args.out, traj.t, [traj.x], trailer)
    out = sys.stdout
    out.write(f"objective_value={_fmt(report.objective_value)}\n")
    out.write(f"iterations={report.iterations}\n")
    out.write(f"gradient_norm={report.gradient_norm:.6g}\n")
    out.write(f"converged={'yes' if report.converged else 'no'}\n")
    if report.multiplier is not None:
        out.write(f"multiplier={_fmt(report.multiplier)}\n")
        out.write(f"constraint_violation={report.constraint_violation:.6g}\n")
        if report.possibly_abnormal:
            log.warning("constraint integrand is stationary at the solution; the extremal may be abnormal")
    return 0 if report.converged else 2


def _parse_n_list(text: str) -> list[int]:
    ns = []
    for part in text.split(","):
        part = part.strip()
        if not part.isdigit():
            raise UsageError(f"--n-list must be comma-separated integers, got {text!r}")
        n = int(part)
        if n < 2:
            raise UsageError(f"grid sizes must be at least 2, got {n}")
        ns.append(n)
    if not ns:
        raise UsageError("--n-list is empty")
    return ns


def _reference(spec, problem):
    if spec is None:
        if problem.reference is None:
            raise UsageError("this problem has no built-in reference; pass --reference analytic:<expr> or finest")
        return problem.reference
    if spec == "finest":
        return "finest"
    if spec.startswith("analytic:"):
        src = spec[len("analytic:"):].strip().strip("\"'")
        try:
            ref = Lagrangian.from_expression(src, slots=())
        except ex.ParseError as exc:
            raise UsageError(f"--reference: {exc} in {src!r}") from None
        return lambda t: np.broadcast_to(ref(t), np.shape(t))
    raise UsageError(f"--reference must be 'finest' or 'analytic:<expr>', got {spec!r}")


def cmd_convergence(args) -> int:
    loaded = load_problem(args.problem)
    ns = _parse_n_list(args.n_list)
    reference = _reference(args.reference, loaded.problem)
    if reference == "finest" and len(set(ns)) < 2:
        raise UsageError("--reference finest needs at least two distinct grid sizes")
    try:
        rows = convergence_study(loaded.problem, ns, reference, _options(args, loaded))
    except RuntimeError as exc:
        # finest-grid reference failed: every row is unusable
        print(f"fracvar convergence: {exc}", file=sys.stderr)
        return 2
    buf = io.StringIO()
    buf.write("n,error,order,status\n")
    failed = False
    for r in rows:
        status = "ok" if r.converged else f"failed: {r.message}"
        if r.is_reference:
            status = "reference"
        failed |= not r.converged
        order = "" if math.isnan(r.order) else f"{r.order:.6g}"
        err = "nan" if math.isnan(r.error) else f"{r.error:.12g}"
        buf.write(f"{r.n},{err},{order},{status}\n")
    table = buf.getvalue()
    sys.stdout.write(table)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(table)
    return 2 if failed else 0


def _estimate_multiplier(problem, traj, band):
    """Least-squares multiplier making the residual of ``L + lam M`` smallest."""
    con = problem.constraint
    rl = el_residual(problem, traj, band=band)
    rm = el_residual(problem.with_lagrangian(con.integrand), traj, band=band)
    lo, hi = rl.band
    u = rl.el_residual[0].values[lo : hi + 1]
    v = rm.el_residual[0].values[lo : hi + 1]
    vv = float(v @ v)
    return 0.0 if vv == 0 else -float(u @ v) / vv


def cmd_residual(args) -> int:
    loaded = load_problem(args.problem)
    problem = loaded.problem
    t, comps = read_solution(args.solution)
    if len(comps) != problem.components:
        raise SolutionFileError(
            f"{args.solution}: has {len(comps)} component(s), problem needs {problem.components}"
        )
    grid = check_grid(t, problem.a, problem.b, args.n)
    traj = Trajectory.from_values(grid, *comps)
    con = problem.constraint
    out = sys.stdout
    if isinstance(con, HolonomicConstraint):
        report = holonomic_residual(problem, traj, band=args.band)
    elif isinstance(con, IsoperimetricConstraint):
        lam = args.multiplier
        if lam is None:
            lam = _estimate_multiplier(problem, traj, args.band)
            log.info("multiplier estimated by least squares: %.12g", lam)
        report = isoperimetric_residual(problem, traj, lam, band=args.band)
    else:
        report = el_residual(problem, traj, band=args.band)
    out.write(f"sup_norm_interior={report.sup_norm_interior:.6g}\n")
    out.write(f"interior_nodes={report.band[0]}..{report.band[1]}\n")
    if report.transversality_left is not None:
        out.write(f"transversality_left={report.transversality_left:.6g}\n")
    if report.transversality_right is not None:
        out.write(f"transversality_right={report.transversality_right:.6g}\n")
    if isinstance(report.multiplier_profile, float):
        out.write(f"multiplier={_fmt(report.multiplier_profile)}\n")
    if report.constraint_sup_norm is not None:
        out.write(f"constraint_violation={report.constraint_sup_norm:.6g}\n")
    if args.legendre:
        # finite-difference second partials carry ~1e-10 noise
        out.write(f"legendre_min={_fmt(report.legendre_min, 8)}\n")
    convexity = None
    if args.convexity is not None:
        if args.convexity < 1:
            raise UsageError("--convexity needs a positive sample count")
        if problem.components != 1:
            raise UsageError("--convexity applies to scalar problems only")
        convexity = convexity_check(problem, samples=args.convexity)
        out.write(f"convexity={'pass' if convexity.passed else 'fail'}\n")
        out.write(f"convexity_worst_margin={convexity.worst_margin:.6g}\n")
    out.write(f"verdict={verdict(report, convexity)}\n")
    for note in report.notes:
        log.info("note: %s", note)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fracvar", description="Fractional variational problems: direct solver and residual audits.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def common(p):
        p.add_argument("--problem", required=True, help="built-in name (example1, example2) or problem file")
        p.add_argument("--tol", type=float, default=None, help="gradient tolerance (default 1e-9)")
        p.add_argument("--max-iter", type=int, default=None, help="Newton iteration cap (default 200)")

    p = sub.add_parser("solve", help="minimize the discretized functional and write a solution CSV")
    common(p)
    p.add_argument("--n", type=int, default=None, help="number of grid cells")
    p.add_argument("--out", required=True, help="solution CSV path")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("convergence", help="max-error table over several grids")
    common(p)
    p.add_argument("--n-list", required=True, help="comma-separated grid sizes, e.g. 10,50,100,200")
    p.add_argument("--reference", default=None, help="'analytic:<expr in t>' or 'finest'")
    p.add_argument("--out", default=None, help="also write the table to this CSV path")
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("residual", help="Euler-Lagrange residuals of a solution CSV")
    p.add_argument("--problem", required=True, help="built-in name or problem file")
    p.add_argument("--solution", required=True, help="solution CSV from 'fracvar solve'")
    p.add_argument("--n", type=int, default=None, help="expected number of grid cells")
    p.add_argument("--band", type=float, default=0.05, help="fraction of nodes dropped at each end")
    p.add_argument("--multiplier", type=float, default=None, help="isoperimetric multiplier (estimated if omitted)")
    p.add_argument("--legendre", action="store_true", help="report the Legendre minimum")
    p.add_argument("--convexity", type=int, default=None, metavar="SAMPLES", help="sampled convexity check")
    p.set_defaults(func=cmd_residual)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (UsageError, ProblemFileError, SolutionFileError, ex.EvaluationError, OrderError, ValueError) as exc:
        print(f"fracvar {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
