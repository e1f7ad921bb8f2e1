"""Problem files (INI-style sections) and solution CSV files.

A problem file looks like::

    [problem]
    a = 0
    b = 1
    alpha = 0.5
    lagrangian = "(x*(d)^2 - sin(x))^2"
    x_a = 0
    x_b = free

    [constraint]
    kind = isoperimetric
    integrand = "x"
    level = 0.6

    [solver]
    n = 100

Two-component problems use ``alpha1``/``alpha2`` and ``x1_a``, ``x1_b``,
``x2_a``, ``x2_b`` with the variables ``x1, x2, d1, d2``.
"""

from __future__ import annotations

import configparser
import io
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .expression import ParseError
from .fracops import Grid
from .problems import (
    BUILTINS,
    TWO_COMPONENT_SLOTS,
    BoundaryCondition,
    HolonomicConstraint,
    IsoperimetricConstraint,
    Lagrangian,
    VariationalProblem,
    builtin,
)

__all__ = [
    "ProblemFileError",
    "SolutionFileError",
    "LoadedProblem",
    "load_problem",
    "parse_problem_text",
    "format_solution",
    "write_solution",
    "read_solution",
]

_DECIMAL = re.compile(r"^[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?$")

_SCALAR_KEYS = {"a", "b", "alpha", "lagrangian", "x_a", "x_b"}
_VECTOR_KEYS = {"a", "b", "alpha1", "alpha2", "lagrangian", "x1_a", "x1_b", "x2_a", "x2_b"}
_CONSTRAINT_KEYS = {
    "isoperimetric": {"kind", "integrand", "level"},
    "holonomic": {"kind", "g"},
}
_SOLVER_KEYS = {"n", "tol", "max_iter"}


class ProblemFileError(ValueError):
    """Invalid problem file; the message names the file, section and key."""


class SolutionFileError(ValueError):
    pass


@dataclass(frozen=True)
class LoadedProblem:
    problem: VariationalProblem
    solver: dict = field(default_factory=dict)
    source: str = ""


class _Ctx:
    def __init__(self, origin: str):
        self.origin = origin

    def error(self, section, key, message):
        where = f"[{section}]" + (f" {key}" if key else "")
        return ProblemFileError(f"{self.origin}: {where}: {message}")


def _unquote(text: str) -> str:
    text = text.strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1:-1]
    return text


def _real(ctx, section, key, raw) -> float:
    text = _unquote(raw)
    if not _DECIMAL.match(text):
        raise ctx.error(section, key, f"expected a decimal number, got {raw!r}")
    return float(text)


def _endpoint(ctx, section, key, raw) -> Optional[float]:
    if _unquote(raw).lower() == "free":
        return None
    return _real(ctx, section, key, raw)


def _expression(ctx, section, key, raw, build):
    text = _unquote(raw)
    try:
        return build(text)
    except ParseError as exc:
        raise ctx.error(section, key, f"{exc} in {text!r}") from None


def _check_keys(ctx, section, present, allowed, required):
    unknown = sorted(set(present) - allowed)
    if unknown:
        raise ctx.error(section, unknown[0], "unknown key")
    missing = sorted(required - set(present))
    if missing:
        raise ctx.error(section, missing[0], "required key is missing")


def parse_problem_text(text: str, origin: str = "<string>") -> LoadedProblem:
    """Parse problem-file text; raises :class:`ProblemFileError` on any defect."""
    ctx = _Ctx(origin)
    parser = configparser.ConfigParser(interpolation=None, strict=True, default_section="\0")
    parser.optionxform = str
    try:
        parser.read_string(text, source=origin)
    except configparser.Error as exc:
        raise ProblemFileError(f"{origin}: {exc}") from None
    sections = set(parser.sections())
    unknown = sorted(sections - {"problem", "constraint", "solver"})
    if unknown:
        raise ctx.error(unknown[0], None, "unknown section")
    if "problem" not in sections:
        raise ctx.error("problem", None, "section is missing")

    prob = dict(parser["problem"])
    vector = "alpha1" in prob or "alpha2" in prob
    allowed = _VECTOR_KEYS if vector else _SCALAR_KEYS
    _check_keys(ctx, "problem", prob, allowed, allowed)
    a = _real(ctx, "problem", "a", prob["a"])
    b = _real(ctx, "problem", "b", prob["b"])
    if not a < b:
        raise ctx.error("problem", "b", f"need a < b, got a={a}, b={b}")
    if vector:
        orders = (
            _real(ctx, "problem", "alpha1", prob["alpha1"]),
            _real(ctx, "problem", "alpha2", prob["alpha2"]),
        )
        slots = TWO_COMPONENT_SLOTS
        boundary = tuple(
            BoundaryCondition(
                _endpoint(ctx, "problem", f"x{i}_a", prob[f"x{i}_a"]),
                _endpoint(ctx, "problem", f"x{i}_b", prob[f"x{i}_b"]),
            )
            for i in (1, 2)
        )
    else:
        orders = (_real(ctx, "problem", "alpha", prob["alpha"]),)
        slots = ("x", "d")
        boundary = (
            BoundaryCondition(
                _endpoint(ctx, "problem", "x_a", prob["x_a"]),
                _endpoint(ctx, "problem", "x_b", prob["x_b"]),
            ),
        )
    for key, al in zip(("alpha1", "alpha2") if vector else ("alpha",), orders):
        if not 0 < al <= 1:
            raise ctx.error("problem", key, f"order must lie in (0, 1], got {al}")
    L = _expression(ctx, "problem", "lagrangian", prob["lagrangian"],
                    lambda s: Lagrangian.from_expression(s, slots))

    constraint = None
    if "constraint" in sections:
        con = dict(parser["constraint"])
        if "kind" not in con:
            raise ctx.error("constraint", "kind", "required key is missing")
        kind = _unquote(con["kind"])
        if kind not in _CONSTRAINT_KEYS:
            raise ctx.error("constraint", "kind", f"expected isoperimetric or holonomic, got {kind!r}")
        keys = _CONSTRAINT_KEYS[kind]
        _check_keys(ctx, "constraint", con, keys, keys)
        if kind == "isoperimetric":
            M = _expression(ctx, "constraint", "integrand", con["integrand"],
                            lambda s: Lagrangian.from_expression(s, slots))
            constraint = IsoperimetricConstraint(M, _real(ctx, "constraint", "level", con["level"]))
        else:
            if not vector:
                raise ctx.error("constraint", "kind", "holonomic constraints need a two-component problem")
            constraint = _expression(ctx, "constraint", "g", con["g"], HolonomicConstraint.from_expression)

    solver = {}
    if "solver" in sections:
        sol = dict(parser["solver"])
        _check_keys(ctx, "solver", sol, _SOLVER_KEYS, set())
        if "n" in sol:
            n = _real(ctx, "solver", "n", sol["n"])
            if n != int(n) or n < 2:
                raise ctx.error("solver", "n", f"expected an integer >= 2, got {sol['n']!r}")
            solver["n"] = int(n)
        if "tol" in sol:
            solver["tol"] = _real(ctx, "solver", "tol", sol["tol"])
        if "max_iter" in sol:
            mi = _real(ctx, "solver", "max_iter", sol["max_iter"])
            if mi != int(mi) or mi < 1:
                raise ctx.error("solver", "max_iter", f"expected a positive integer, got {sol['max_iter']!r}")
            solver["max_iter"] = int(mi)

    try:
        problem = VariationalProblem(a, b, orders, L, boundary, constraint, name=Path(origin).stem)
    except ValueError as exc:
        raise ctx.error("problem", None, str(exc)) from None
    return LoadedProblem(problem, solver, origin)


def load_problem(spec: str) -> LoadedProblem:
    """Resolve a built-in name first, then a file path."""
    if spec in BUILTINS:
        return LoadedProblem(builtin(spec), {}, spec)
    path = Path(spec)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ProblemFileError(f"{spec}: not a built-in problem and not a readable file ({exc.strerror})") from None
    return parse_problem_text(text, str(path))


def _g12(v: float) -> str:
    s = f"{v:.12g}"
    return "0" if s == "-0" else s


def format_solution(t, components, trailer: Optional[str] = None) -> str:
    """CSV text: header ``t,x`` (or ``t,x1,x2``), 12 significant digits, ``\\n`` line ends."""
    comps = [np.asarray(c, dtype=float) for c in components]
    names = ["x"] if len(comps) == 1 else [f"x{i}" for i in range(1, len(comps) + 1)]
    buf = io.StringIO()
    buf.write(",".join(["t", *names]) + "\n")
    for j, tj in enumerate(np.asarray(t, dtype=float)):
        buf.write(",".join([_g12(tj), *(_g12(c[j]) for c in comps)]) + "\n")
    if trailer:
        buf.write("# " + trailer.replace("\n", " ") + "\n")
    return buf.getvalue()


def write_solution(path, t, components, trailer: Optional[str] = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_solution(t, components, trailer))


def read_solution(path):
    """Read a solution CSV; returns ``(t, [component arrays])``. ``#`` lines are skipped."""
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise SolutionFileError(f"{path}: cannot read ({exc.strerror})") from None
    rows = [ln for ln in lines if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows:
        raise SolutionFileError(f"{path}: empty solution file")
    header = [h.strip() for h in rows[0].split(",")]
    if header not in (["t", "x"], ["t", "x1", "x2"]):
        raise SolutionFileError(f"{path}: expected header 't,x' or 't,x1,x2', got {rows[0]!r}")
    data = []
    for lineno, ln in enumerate(rows[1:], start=2):
        parts = ln.split(",")
        if len(parts) != len(header):
            raise SolutionFileError(f"{path}: data row {lineno} has {len(parts)} fields, expected {len(header)}")
        try:
            data.append([float(p) for p in parts])
        except ValueError:
            raise SolutionFileError(f"{path}: data row {lineno} is not numeric: {ln!r}") from None
    arr = np.array(data, dtype=float).reshape(-1, len(header))
    if not np.all(np.isfinite(arr)):
        raise SolutionFileError(f"{path}: non-finite values")
    t = arr[:, 0]
    if len(t) >= 2 and not np.all(np.diff(t) > 0):
        raise SolutionFileError(f"{path}: t column is not strictly increasing")
    return t, [arr[:, k] for k in range(1, len(header))]


def check_grid(t: np.ndarray, a: float, b: float, n: Optional[int] = None, rtol: float = 1e-9) -> Grid:
    """Verify that ``t`` samples the uniform grid on ``[a, b]``; returns that grid."""
    if n is not None and len(t) != n + 1:
        raise SolutionFileError(f"solution has {len(t)} rows, expected {n + 1} for n={n}")
    if len(t) < 3:
        raise SolutionFileError(f"solution needs at least 3 rows, got {len(t)}")
    grid = Grid(a, b, len(t) - 1)
    scale = max(abs(a), abs(b), grid.h)
    dev = float(np.max(np.abs(t - grid.nodes)))
    if dev > rtol * scale:
        raise SolutionFileError(
            f"solution nodes do not match the uniform grid on [{a}, {b}] with n={grid.n} (max deviation {dev:.3g})"
        )
    return grid
