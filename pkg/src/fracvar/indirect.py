"""Necessary- and sufficient-condition checks for candidate trajectories.

Every check works on sampled data: partial derivatives of ``L`` come from
central differences at the nodes, left Caputo derivatives from the
Grünwald-Letnikov approximation (unless exact values are supplied), and the
right-sided operators from their reflected GL sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .direct import Trajectory
from .fracops import (
    FracOrder,
    SampledSignal,
    caputo_left,
    caputo_left_higher,
    caputo_right,
    rl_right_derivative,
    rl_right_integral,
)
from .problems import (
    HolonomicConstraint,
    IsoperimetricConstraint,
    Lagrangian,
    VariationalProblem,
    partial,
    second_partial,
)

__all__ = [
    "ResidualReport",
    "ConvexityResult",
    "HypothesisError",
    "el_residual",
    "isoperimetric_residual",
    "holonomic_residual",
    "higher_order_residual",
    "legendre_check",
    "convexity_check",
    "interior_band",
    "verdict",
]

DEFAULT_BAND = 0.05
LEGENDRE_NOTE = "Legendre value assumes L is twice continuously differentiable in its derivative slot"


class HypothesisError(ValueError):
    """A theorem hypothesis fails on the supplied trajectory."""


@dataclass(frozen=True, eq=False)
class ResidualReport:
    """Pointwise necessary-condition residuals for one trajectory.

    ``sup_norm_interior`` is the max of ``|residual|`` over all components at
    nodes ``band[0]..band[1]`` inclusive.
    """

    el_residual: tuple[SampledSignal, ...]
    sup_norm_interior: float
    band: tuple[int, int]
    legendre_min: float
    transversality_left: Optional[float] = None
    transversality_right: Optional[float] = None
    multiplier_profile: Union[None, float, SampledSignal] = None
    constraint_sup_norm: Optional[float] = None
    unconstrained: tuple[SampledSignal, ...] = field(default=())
    possibly_abnormal: bool = False
    notes: tuple[str, ...] = field(default=())


@dataclass(frozen=True)
class ConvexityResult:
    passed: bool
    worst_margin: float
    worst_point: tuple[float, ...]
    samples: int


def interior_band(n: int, fraction: float = DEFAULT_BAND) -> tuple[int, int]:
    """Node range kept after dropping ``fraction`` of the nodes at each end (at least one)."""
    if not 0 <= fraction < 0.5:
        raise ValueError(f"band fraction must lie in [0, 0.5), got {fraction}")
    k = max(1, math.ceil(fraction * n))
    if n - k < k:
        raise ValueError(f"grid with n={n} has no interior nodes for band {fraction}")
    return k, n - k


def _sup(signals, band):
    lo, hi = band
    return float(max(np.max(np.abs(s.values[lo : hi + 1])) for s in signals))


def _component_values(trajectory: Trajectory, m: int):
    if len(trajectory.components) != m:
        raise ValueError(f"expected {m} trajectory component(s), got {len(trajectory.components)}")
    return [c.values for c in trajectory.components]


def _derivatives(problem, trajectory, derivatives):
    """Left Caputo samples per component, either supplied or approximated."""
    m = problem.components
    if derivatives is None:
        return [caputo_left(c, o).values for c, o in zip(trajectory.components, problem.orders)]
    if len(derivatives) != m:
        raise ValueError(f"expected {m} derivative sample arrays, got {len(derivatives)}")
    out = []
    for d in derivatives:
        vals = d.values if isinstance(d, SampledSignal) else np.asarray(d, dtype=float)
        if vals.shape != (trajectory.grid.n + 1,):
            raise ValueError("derivative samples must cover every grid node")
        out.append(vals)
    return out


def _legendre_min(L: Lagrangian, point, slots: Sequence[int]) -> float:
    return float(min(np.min(second_partial(L, k, point)) for k in slots))


def _require_fractional(problem):
    for o in problem.orders:
        if not 0 < o.alpha < 1:
            raise ValueError(f"residual evaluation needs 0 < alpha < 1, got {o.alpha}")


def el_residual(
    problem: VariationalProblem,
    trajectory: Trajectory,
    derivatives=None,
    band: float = DEFAULT_BAND,
) -> ResidualReport:
    """Fractional Euler-Lagrange residuals ``d_{x_i} L + D_{b-}^{alpha_i}(d_{D_i} L)``.

    ``derivatives`` optionally supplies exact left Caputo samples per
    component to use in ``L``'s derivative slots instead of the GL
    approximation. Transversality values ``I_{b-}^{1-alpha}(d_D L)`` are
    reported at each free endpoint.
    """
    if problem.higher_order:
        raise ValueError("use higher_order_residual for higher-order problems")
    _require_fractional(problem)
    m = problem.components
    grid = trajectory.grid
    xs = _component_values(trajectory, m)
    ds = _derivatives(problem, trajectory, derivatives)
    L = problem.lagrangian
    point = (grid.nodes, *xs, *ds)

    residuals = []
    d_partials = []
    for i, order in enumerate(problem.orders):
        px = partial(L, 2 + i, point)
        pd = SampledSignal(grid, partial(L, 2 + m + i, point))
        right = rl_right_derivative(pd, order)
        residuals.append(SampledSignal(grid, px + right.values, (0, grid.n)))
        d_partials.append(pd)

    lo_hi = interior_band(grid.n, band)
    # with several components the largest-magnitude value over free ends is kept
    trans = {0: None, -1: None}
    for bc, pd, order in zip(problem.boundary, d_partials, problem.orders):
        ends = [j for j, free in ((0, bc.left_free), (-1, bc.right_free)) if free]
        if not ends:
            continue
        integ = rl_right_integral(pd, 1.0 - order.alpha).values
        for j in ends:
            v = float(integ[j])
            if trans[j] is None or abs(v) > abs(trans[j]):
                trans[j] = v
    trans_l, trans_r = trans[0], trans[-1]
    legendre = _legendre_min(L, point, [2 + m + i for i in range(m)])
    return ResidualReport(
        el_residual=tuple(residuals),
        sup_norm_interior=_sup(residuals, lo_hi),
        band=lo_hi,
        legendre_min=legendre,
        transversality_left=trans_l,
        transversality_right=trans_r,
        notes=(LEGENDRE_NOTE,),
    )


def isoperimetric_residual(
    problem: VariationalProblem,
    trajectory: Trajectory,
    lam: float,
    derivatives=None,
    band: float = DEFAULT_BAND,
    abnormal_tol: float = 1e-8,
) -> ResidualReport:
    """Euler-Lagrange residual of ``F = L + lam * M`` for an isoperimetric problem.

    Also evaluates the residual of ``M`` alone; when its interior sup norm is
    below ``abnormal_tol`` the trajectory may be an abnormal extremal, for
    which a multiplier on ``L`` may vanish.
    """
    constraint = problem.constraint
    if not isinstance(constraint, IsoperimetricConstraint):
        raise ValueError("isoperimetric_residual needs an isoperimetric problem")
    if not math.isfinite(lam):
        raise ValueError("multiplier must be finite")
    F = problem.lagrangian.combined(constraint.integrand, lam)
    main = el_residual(problem.with_lagrangian(F), trajectory, derivatives, band)
    m_only = el_residual(problem.with_lagrangian(constraint.integrand), trajectory, derivatives, band)
    abnormal = m_only.sup_norm_interior <= abnormal_tol
    grid = trajectory.grid
    xs = _component_values(trajectory, problem.components)
    ds = _derivatives(problem, trajectory, derivatives)
    # same right-endpoint quadrature as the direct solver
    g_value = grid.h * float(np.sum(constraint.integrand(grid.nodes[1:], *(v[1:] for v in (*xs, *ds)))))
    notes = main.notes
    if abnormal:
        notes += ("constraint integrand is itself stationary; possibly abnormal",)
    return ResidualReport(
        el_residual=main.el_residual,
        sup_norm_interior=main.sup_norm_interior,
        band=main.band,
        legendre_min=main.legendre_min,
        transversality_left=main.transversality_left,
        transversality_right=main.transversality_right,
        multiplier_profile=float(lam),
        constraint_sup_norm=abs(g_value - constraint.level),
        unconstrained=m_only.el_residual,
        possibly_abnormal=abnormal,
        notes=notes,
    )


def holonomic_residual(
    problem: VariationalProblem,
    trajectory: Trajectory,
    derivatives=None,
    band: float = DEFAULT_BAND,
    min_constraint_slope: float = 1e-10,
) -> ResidualReport:
    """Residual of the two-component problem under ``g(t, x1, x2) = 0``.

    The multiplier ``lambda(t_j)`` is eliminated from the second equation,
    ``lambda = -(d_{x2} L + cD_{b-}(d_{D2} L)) / d_{x2} g``, and the report
    carries the first equation's residual with that multiplier. Right Caputo
    derivatives come from the right RL derivative minus its boundary term.
    """
    g = problem.constraint
    if not isinstance(g, HolonomicConstraint):
        raise ValueError("holonomic_residual needs a holonomic constraint")
    _require_fractional(problem)
    grid = trajectory.grid
    x1, x2 = _component_values(trajectory, 2)
    d1, d2 = _derivatives(problem, trajectory, derivatives)
    L = problem.lagrangian
    t = grid.nodes
    point = (t, x1, x2, d1, d2)

    g_x1 = np.broadcast_to(g.partial(2, t, x1, x2), t.shape)
    g_x2 = np.broadcast_to(g.partial(3, t, x1, x2), t.shape)
    bad = np.flatnonzero(np.abs(g_x2) < min_constraint_slope)
    if bad.size:
        raise HypothesisError(
            f"d g / d x2 vanishes at node {bad[0]} (t = {t[bad[0]]:.6g}); cannot eliminate the multiplier"
        )
    a1, a2 = problem.orders
    c4 = caputo_right(SampledSignal(grid, partial(L, 4, point)), a1).values
    c5 = caputo_right(SampledSignal(grid, partial(L, 5, point)), a2).values
    free1 = partial(L, 2, point) + c4
    free2 = partial(L, 3, point) + c5
    lam = -free2 / g_x2
    r1 = free1 + lam * g_x1
    r2 = free2 + lam * g_x2
    flagged = (0, grid.n)
    residuals = (SampledSignal(grid, r1, flagged), SampledSignal(grid, r2, flagged))
    lo_hi = interior_band(grid.n, band)
    violation = float(np.max(np.abs(np.broadcast_to(g(t, x1, x2), t.shape))))
    return ResidualReport(
        el_residual=residuals,
        sup_norm_interior=_sup(residuals, lo_hi),
        band=lo_hi,
        legendre_min=_legendre_min(L, point, [4, 5]),
        multiplier_profile=SampledSignal(grid, lam, flagged),
        constraint_sup_norm=violation,
        unconstrained=(SampledSignal(grid, free1, flagged), SampledSignal(grid, free2, flagged)),
    )


def _right_derivative_any(phi: SampledSignal, order: FracOrder) -> SampledSignal:
    """Right RL derivative of any non-integer order.

    ``D_{b-}^alpha = (-d/dt)^(i-1) D_{b-}^beta`` with ``alpha = (i - 1) + beta``;
    the integer part uses second-order central differences.
    """
    band = order.band
    out = rl_right_derivative(phi, order.fractional_part)
    vals = out.values
    h = phi.grid.h
    for _ in range(band - 1):
        vals = -np.gradient(vals, h, edge_order=2)
    flagged = set(out.flagged) | {phi.grid.n - k for k in range(band)}
    return SampledSignal(phi.grid, vals, tuple(flagged))


def higher_order_residual(
    problem: VariationalProblem,
    trajectory: Trajectory,
    initial_derivs: Sequence[float] = (),
    band: float = DEFAULT_BAND,
) -> ResidualReport:
    """Residual ``d_x L + sum_i D_{b-}^{alpha_i}(d_{D_i} L)`` for orders ``alpha_i in (i-1, i)``.

    ``initial_derivs`` gives ``x(a), x'(a), ...`` for the Taylor subtraction
    in the left Caputo derivatives of order above one. A one-order problem
    gives exactly :func:`el_residual`.
    """
    if not problem.higher_order:
        if problem.components == 1:
            return el_residual(problem, trajectory, band=band)
        raise ValueError("higher_order_residual needs a higher-order or scalar problem")
    orders = problem.orders
    if len(orders) > 3:
        raise ValueError("at most three derivative orders are supported")
    grid = trajectory.grid
    (x,) = _component_values(trajectory, 1)
    sig = trajectory.components[0]
    ds = []
    for order in orders:
        if order.alpha < 1:
            ds.append(caputo_left(sig, order).values)
        else:
            ds.append(caputo_left_higher(sig, order, initial_derivs).values)
    L = problem.lagrangian
    point = (grid.nodes, x, *ds)
    total = np.array(partial(L, 2, point), dtype=float)
    flagged = {0}
    for i, order in enumerate(orders, start=1):
        pd = SampledSignal(grid, partial(L, 2 + i, point))
        right = _right_derivative_any(pd, order)
        total = total + right.values
        flagged |= set(right.flagged)
    residual = SampledSignal(grid, total, tuple(flagged))
    lo_hi = interior_band(grid.n, band)
    legendre = _legendre_min(L, point, [2 + i for i in range(1, len(orders) + 1)])
    return ResidualReport(
        el_residual=(residual,),
        sup_norm_interior=_sup([residual], lo_hi),
        band=lo_hi,
        legendre_min=legendre,
    )


def legendre_check(problem: VariationalProblem, trajectory: Trajectory, derivatives=None) -> float:
    """Minimum over nodes of ``d^2 L / d D^2`` along the trajectory.

    A value of at least about ``-1e-6`` is consistent with a minimizer. For
    several components the minimum runs over every derivative slot.
    """
    grid = trajectory.grid
    if problem.higher_order:
        raise ValueError("legendre_check handles problems of order below one")
    m = problem.components
    xs = _component_values(trajectory, m)
    ds = _derivatives(problem, trajectory, derivatives)
    point = (grid.nodes, *xs, *ds)
    return _legendre_min(problem.lagrangian, point, [2 + m + i for i in range(m)])


def convexity_check(
    problem: VariationalProblem,
    samples: int = 1000,
    box: float | tuple[float, float] = 10.0,
    step_box: float | tuple[float, float] | None = None,
    seed: int = 0,
    tol: float = 1e-9,
) -> ConvexityResult:
    """Randomized test of joint convexity of a scalar ``L`` in ``(x, D)``.

    Samples ``t`` in ``[a, b]``, base points ``(x, y)`` in ``box`` and
    increments ``(v, w)`` in ``step_box`` (defaults to ``box``), and records
    the margin ``L(t, x+v, y+w) - L(t, x, y) - d_x L v - d_D L w``. The check
    passes when every margin is at least ``-tol * (1 + |L| scale)``. Passing
    is sampled evidence, not proof.
    """
    if samples < 1:
        raise ValueError("need at least one sample")
    if problem.components != 1 or problem.higher_order:
        raise ValueError("convexity_check handles scalar problems")
    lo, hi = (-box, box) if np.isscalar(box) else box
    sb = box if step_box is None else step_box
    slo, shi = (-sb, sb) if np.isscalar(sb) else sb
    rng = np.random.default_rng(seed)
    t = rng.uniform(problem.a, problem.b, samples)
    x = rng.uniform(lo, hi, samples)
    y = rng.uniform(lo, hi, samples)
    v = rng.uniform(slo, shi, samples)
    w = rng.uniform(slo, shi, samples)
    L = problem.lagrangian
    base = np.broadcast_to(L(t, x, y), t.shape)
    moved = np.broadcast_to(L(t, x + v, y + w), t.shape)
    px = partial(L, 2, (t, x, y))
    py = partial(L, 3, (t, x, y))
    margin = moved - base - px * v - py * w
    allowed = -tol * (1.0 + np.abs(base) + np.abs(moved))
    k = int(np.argmin(margin - allowed))
    worst = int(np.argmin(margin))
    return ConvexityResult(
        passed=bool(margin[k] >= allowed[k]),
        worst_margin=float(margin[worst]),
        worst_point=(float(t[worst]), float(x[worst]), float(y[worst]), float(v[worst]), float(w[worst])),
        samples=samples,
    )


def verdict(report: ResidualReport, convexity: ConvexityResult | None = None,
            residual_tol: float = 1e-6, legendre_tol: float = 1e-6) -> str:
    """Plain-language classification of a residual report."""
    if report.sup_norm_interior > residual_tol:
        return "not an extremal (Euler-Lagrange residual too large)"
    if report.legendre_min < -legendre_tol:
        return "extremal failing the Legendre condition (not a minimizer)"
    if convexity is not None and convexity.passed:
        return "global minimizer (sampled-convexity evidence)"
    return "candidate minimizer"
