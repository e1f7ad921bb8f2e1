"""Variational problem model: Lagrangians, boundary data, constraints, built-ins."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from . import expression as ex
from .fracops import FracOrder, gamma

__all__ = [
    "Lagrangian",
    "BoundaryCondition",
    "IsoperimetricConstraint",
    "HolonomicConstraint",
    "VariationalProblem",
    "partial",
    "second_partial",
    "builtin",
    "BUILTINS",
    "UnknownProblemError",
]

SCALAR_SLOTS = ("x", "d")
TWO_COMPONENT_SLOTS = ("x1", "x2", "d1", "d2")

_EPS = np.finfo(float).eps
_FD_STEP = _EPS ** (1.0 / 3.0)
_FD2_STEP = _EPS ** (1.0 / 6.0)


class UnknownProblemError(KeyError):
    pass


def _expression_function(node, slots):
    def func(t, *args):
        env = {"t": t}
        env.update(zip(slots, args))
        out = ex.evaluate(node, env)
        shape = np.broadcast(t, *args).shape
        if shape:
            return np.broadcast_to(np.asarray(out, dtype=float), shape)
        return float(out)

    return func


@dataclass(frozen=True, eq=False)
class Lagrangian:
    """Integrand ``L(t, *slots)`` evaluated pointwise or on node arrays.

    ``slots`` names the arguments after ``t``: ``("x", "d")`` for scalar
    problems, ``("x1", "x2", "d1", "d2")`` for two components, and
    ``("x", "d1", ..., "dm")`` for higher-order problems. Argument positions
    follow the usual 1-based convention, so ``t`` is argument 1 and the first
    slot is argument 2.
    """

    func: Callable
    slots: tuple[str, ...] = SCALAR_SLOTS
    source: Optional[str] = None

    @classmethod
    def from_expression(cls, source: str, slots=SCALAR_SLOTS) -> Lagrangian:
        node = ex.parse(source, variables={"t", *slots})
        return cls(_expression_function(node, tuple(slots)), tuple(slots), source)

    @property
    def arity(self) -> str:
        return "two-component" if self.slots == TWO_COMPONENT_SLOTS else "scalar"

    def __call__(self, t, *args):
        if len(args) != len(self.slots):
            raise TypeError(f"expected {len(self.slots)} arguments after t, got {len(args)}")
        return self.func(t, *args)

    def scaled(self, c: float) -> Lagrangian:
        base = self.func
        src = None if self.source is None else f"({c!r}) * ({self.source})"
        return Lagrangian(lambda t, *a: c * base(t, *a), self.slots, src)

    def combined(self, other: Lagrangian, lam: float) -> Lagrangian:
        """``self + lam * other`` with matching slots."""
        if other.slots != self.slots:
            raise ValueError("cannot combine Lagrangians with different slots")
        f, g = self.func, other.func
        src = None
        if self.source is not None and other.source is not None:
            src = f"({self.source}) + ({lam!r}) * ({other.source})"
        return Lagrangian(lambda t, *a: f(t, *a) + lam * g(t, *a), self.slots, src)


def _finite(value, what):
    if not np.all(np.isfinite(value)):
        raise ex.EvaluationError(f"non-finite value while evaluating {what}")
    return value


def partial(L: Lagrangian, which: int, point) -> float | np.ndarray:
    """Central-difference partial derivative of ``L`` in argument ``which``.

    ``point`` is ``(t, *slots)``; entries may be arrays, in which case the
    derivative is taken elementwise. The step is
    ``cbrt(eps) * max(1, |coordinate|)``.
    """
    if not 1 <= which <= len(point):
        raise ValueError(f"argument index {which} out of range 1..{len(point)}")
    args = [np.asarray(p, dtype=float) for p in point]
    k = which - 1
    s = _FD_STEP * np.maximum(1.0, np.abs(args[k]))
    up = list(args)
    dn = list(args)
    up[k] = args[k] + s
    dn[k] = args[k] - s
    # actual representable step, not the nominal one
    step = up[k] - dn[k]
    fu = _finite(L(*up), "partial derivative probe")
    fd = _finite(L(*dn), "partial derivative probe")
    out = (fu - fd) / step
    return float(out) if np.ndim(out) == 0 else out


def second_partial(L: Lagrangian, which: int, point) -> float | np.ndarray:
    """Five-point central second difference of ``L`` in argument ``which``.

    The step is the power of two nearest ``eps^(1/6) * max(1, |coordinate|)``,
    so every probe point is exact and quadratics are differentiated exactly.
    """
    args = [np.asarray(p, dtype=float) for p in point]
    k = which - 1
    s = np.exp2(np.round(np.log2(_FD2_STEP * np.maximum(1.0, np.abs(args[k])))))

    def at(m):
        shifted = list(args)
        shifted[k] = args[k] + m * s
        return _finite(L(*shifted), "second derivative probe")

    out = (16.0 * (at(1) + at(-1)) - (at(2) + at(-2)) - 30.0 * at(0)) / (12.0 * s * s)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class BoundaryCondition:
    """Endpoint data for one component; ``None`` marks a free endpoint."""

    left: Optional[float] = None
    right: Optional[float] = None

    def __post_init__(self):
        for v in (self.left, self.right):
            if v is not None and not math.isfinite(v):
                raise ValueError("fixed boundary values must be finite")

    @property
    def left_free(self) -> bool:
        return self.left is None

    @property
    def right_free(self) -> bool:
        return self.right is None


@dataclass(frozen=True)
class IsoperimetricConstraint:
    """Integral constraint ``int_a^b M(t, x, D x) dt = level``."""

    integrand: Lagrangian
    level: float


@dataclass(frozen=True, eq=False)
class HolonomicConstraint:
    """Pointwise constraint ``g(t, x1, x2) = 0``."""

    func: Callable
    source: Optional[str] = None

    @classmethod
    def from_expression(cls, source: str) -> HolonomicConstraint:
        node = ex.parse(source, variables={"t", "x1", "x2"})
        return cls(_expression_function(node, ("x1", "x2")), source)

    def __call__(self, t, x1, x2):
        return self.func(t, x1, x2)

    def partial(self, which: int, t, x1, x2):
        """Derivative in argument 2 (``x1``) or 3 (``x2``)."""
        return partial(Lagrangian(self.func, ("x1", "x2")), which, (t, x1, x2))


Constraint = Union[None, IsoperimetricConstraint, HolonomicConstraint]


@dataclass(frozen=True, eq=False)
class VariationalProblem:
    """Minimize ``int_a^b L(t, x, cD^alpha x) dt`` subject to boundary data.

    With several orders the problem is either vector-valued (one order in
    (0, 1) per component) or, when ``higher_order`` is set, scalar with
    orders ``alpha_i in (i-1, i)`` feeding slots ``d1..dm``.
    """

    a: float
    b: float
    orders: tuple[FracOrder, ...]
    lagrangian: Lagrangian
    boundary: tuple[BoundaryCondition, ...]
    constraint: Constraint = None
    higher_order: bool = False
    name: str = "problem"
    reference: Optional[Callable] = field(default=None, repr=False)

    def __post_init__(self):
        orders = tuple(o if isinstance(o, FracOrder) else FracOrder(float(o)) for o in self.orders)
        object.__setattr__(self, "orders", orders)
        object.__setattr__(self, "boundary", tuple(self.boundary))
        if not (math.isfinite(self.a) and math.isfinite(self.b) and self.a < self.b):
            raise ValueError(f"need finite a < b, got [{self.a}, {self.b}]")
        m = len(orders)
        if m == 0:
            raise ValueError("at least one order is required")
        slots = self.lagrangian.slots
        if self.higher_order:
            for i, o in enumerate(orders, start=1):
                if not i - 1 < o.alpha < i:
                    raise ValueError(f"higher-order alpha_{i} must lie in ({i - 1}, {i}), got {o.alpha}")
            if len(slots) != m + 1:
                raise ValueError(f"higher-order Lagrangian needs {m + 1} slots, got {len(slots)}")
            if len(self.boundary) != 1:
                raise ValueError("higher-order problems have one component")
        else:
            for o in orders:
                if not 0 < o.alpha <= 1:
                    raise ValueError(f"order must lie in (0, 1], got {o.alpha}")
            if len(slots) != 2 * m:
                raise ValueError(f"Lagrangian has {len(slots)} slots, expected {2 * m} for {m} component(s)")
            if len(self.boundary) != m:
                raise ValueError(f"need {m} boundary conditions, got {len(self.boundary)}")
        if isinstance(self.constraint, IsoperimetricConstraint):
            if self.constraint.integrand.slots != slots:
                raise ValueError("isoperimetric integrand must take the same arguments as L")
        if isinstance(self.constraint, HolonomicConstraint) and m != 2:
            raise ValueError("holonomic constraints need exactly two components")

    @property
    def components(self) -> int:
        return 1 if self.higher_order else len(self.orders)

    @property
    def alpha(self) -> float:
        return self.orders[0].alpha

    def with_lagrangian(self, lagrangian: Lagrangian) -> VariationalProblem:
        return VariationalProblem(
            self.a, self.b, self.orders, lagrangian, self.boundary,
            self.constraint, self.higher_order, self.name, self.reference,
        )


# Caputo derivative of t^2 of order 1/2 is Gamma(3)/Gamma(5/2) t^{3/2}
EXAMPLE1_LAGRANGIAN = "(d - 2/gammafn(2.5)*t^1.5)^2"
EXAMPLE2_LAGRANGIAN = "(x*(d)^2 - sin(x))^2"


def _example1() -> VariationalProblem:
    return VariationalProblem(
        0.0, 10.0, (FracOrder(0.5),),
        Lagrangian.from_expression(EXAMPLE1_LAGRANGIAN),
        (BoundaryCondition(0.0, 100.0),),
        name="example1",
        reference=lambda t: np.asarray(t, dtype=float) ** 2,
    )


def _example2() -> VariationalProblem:
    return VariationalProblem(
        0.0, 1.0, (FracOrder(0.5),),
        Lagrangian.from_expression(EXAMPLE2_LAGRANGIAN),
        (BoundaryCondition(0.0, 1.0),),
        name="example2",
    )


BUILTINS = {"example1": _example1, "example2": _example2}


def builtin(name: str) -> VariationalProblem:
    """Built-in problems ``example1`` (minimizer t^2 on [0, 10]) and ``example2``."""
    try:
        return BUILTINS[name]()
    except KeyError:
        raise UnknownProblemError(f"unknown built-in problem {name!r}; known: {sorted(BUILTINS)}") from None


def exact_caputo_power(t, p: float, alpha: float):
    """Caputo derivative of ``t^p`` with lower terminal 0, valid for ``p > ceil(alpha) - 1``."""
    return gamma(p + 1.0) / gamma(p + 1.0 - alpha) * np.asarray(t, dtype=float) ** (p - alpha)
