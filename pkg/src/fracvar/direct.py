"""Direct method: discretize the functional, then solve its stationarity system.

The functional is replaced by the right-endpoint sum

    Psi(x_1, ..., x_{N-1}) = sum_{k=1}^{N} h L(t_k, x_k, D x(t_k))

with ``D`` the truncated Grünwald-Letnikov Caputo approximation, and
``grad Psi = 0`` is solved by damped Newton iteration.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .expression import EvaluationError
from .fracops import Grid, SampledSignal, caputo_left, gl_left, gl_weights, rgamma
from .problems import IsoperimetricConstraint, Lagrangian, VariationalProblem, partial

__all__ = [
    "Trajectory",
    "SolverOptions",
    "SolveReport",
    "DiscretizedObjective",
    "ConvergenceRow",
    "solve",
    "solve_penalty",
    "convergence_study",
    "linear_seed",
]

log = logging.getLogger(__name__)

_EPS = np.finfo(float).eps


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled candidate function, one signal per component on a shared grid."""

    grid: Grid
    components: tuple[SampledSignal, ...]

    def __post_init__(self):
        comps = tuple(
            c if isinstance(c, SampledSignal) else SampledSignal(self.grid, c)
            for c in self.components
        )
        if not comps:
            raise ValueError("a trajectory needs at least one component")
        if any(c.grid != self.grid for c in comps):
            raise ValueError("all components must share the trajectory grid")
        object.__setattr__(self, "components", comps)

    @classmethod
    def from_values(cls, grid: Grid, *values) -> Trajectory:
        return cls(grid, tuple(SampledSignal(grid, v) for v in values))

    @classmethod
    def from_function(cls, grid: Grid, *funcs) -> Trajectory:
        return cls(grid, tuple(SampledSignal.from_function(grid, f) for f in funcs))

    @property
    def t(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def x(self) -> np.ndarray:
        return self.components[0].values


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-9
    max_iter: int = 200
    damping_max: int = 30
    seed: Optional[np.ndarray] = field(default=None, repr=False)


@dataclass(frozen=True, eq=False)
class SolveReport:
    trajectory: Trajectory
    iterations: int
    gradient_norm: float
    objective_value: float
    converged: bool
    multiplier: Optional[float] = None
    constraint_violation: Optional[float] = None
    possibly_abnormal: bool = False
    message: str = ""


class DiscretizedObjective:
    """Psi and its gradient for a scalar problem on an ``n``-cell grid.

    Unknowns are the interior nodes plus any free endpoint, in node order.
    """

    def __init__(self, problem: VariationalProblem, n: int):
        if problem.higher_order or problem.components != 1:
            raise ValueError("the direct solver handles scalar problems only")
        alpha = problem.alpha
        if not 0 < alpha <= 1:
            raise ValueError(f"the direct solver needs 0 < alpha <= 1, got {alpha}")
        self.problem = problem
        self.alpha = alpha
        self.grid = Grid(problem.a, problem.b, n)
        bc = problem.boundary[0]
        free = list(range(1, n))
        if bc.left_free:
            free.insert(0, 0)
        if bc.right_free:
            free.append(n)
        self.free_index = np.array(free, dtype=int)
        self._template = np.zeros(n + 1)
        if not bc.left_free:
            self._template[0] = bc.left
        if not bc.right_free:
            self._template[n] = bc.right
        tau = self.grid.nodes[1:] - self.grid.a
        self._corr = rgamma(1.0 - alpha) * tau ** (-alpha)
        self._W = None

    @property
    def size(self) -> int:
        return len(self.free_index)

    def full(self, unknowns) -> np.ndarray:
        u = np.asarray(unknowns, dtype=float)
        if u.shape != (self.size,):
            raise ValueError(f"expected {self.size} unknowns, got shape {u.shape}")
        x = self._template.copy()
        x[self.free_index] = u
        return x

    def restrict(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float)[self.free_index]

    def derivative(self, x) -> np.ndarray:
        return caputo_left(SampledSignal(self.grid, x), self.alpha).values

    def _nodes(self, x):
        d = self.derivative(x)
        return self.grid.nodes[1:], x[1:], d[1:]

    def integral(self, L: Lagrangian, x) -> float:
        """Right-endpoint sum ``sum_{k=1}^N h L(t_k, x_k, D x(t_k))``."""
        t, xs, d = self._nodes(x)
        vals = L(t, xs, d)
        if not np.all(np.isfinite(vals)):
            raise EvaluationError("non-finite Lagrangian value on the grid")
        return float(self.grid.h * np.sum(vals))

    def full_gradient(self, L: Lagrangian, x) -> np.ndarray:
        """Derivative of ``integral(L, x)`` with respect to every node value."""
        h = self.grid.h
        t, xs, d = self._nodes(x)
        g2 = partial(L, 2, (t, xs, d))
        g3 = partial(L, 3, (t, xs, d))
        grad = np.zeros(self.grid.n + 1)
        grad[1:] += h * g2
        # x_i enters D x(t_k) for every k >= i with weight w_{k-i} / h^alpha
        phi = np.zeros(self.grid.n + 1)
        phi[1:] = g3
        grad += h * gl_left(phi[::-1], self.alpha, h)[::-1]
        grad[0] -= h * np.dot(self._corr, g3)
        return grad

    def _gl_matrix(self) -> np.ndarray:
        # W[k, i] = w_{k-i} / h^alpha for i <= k, so D x = W x - x_0 corr
        if self._W is None:
            n = self.grid.n
            w = gl_weights(self.alpha, n) / self.grid.h**self.alpha
            lag = np.subtract.outer(np.arange(n + 1), np.arange(n + 1))
            self._W = np.where(lag >= 0, w[np.clip(lag, 0, n)], 0.0)
        return self._W

    def full_gradient_rows(self, L: Lagrangian, X) -> np.ndarray:
        """:meth:`full_gradient` for every row of ``X`` in one vectorized pass."""
        X = np.asarray(X, dtype=float)
        W = self._gl_matrix()
        h = self.grid.h
        D = X @ W.T
        D[:, 1:] -= X[:, :1] * self._corr
        point = (self.grid.nodes[1:], X[:, 1:], D[:, 1:])
        shape = X[:, 1:].shape
        g2 = np.broadcast_to(partial(L, 2, point), shape)
        g3 = np.broadcast_to(partial(L, 3, point), shape)
        phi = np.zeros_like(X)
        phi[:, 1:] = g3
        grad = h * (phi @ W)
        grad[:, 1:] += h * g2
        grad[:, 0] -= h * (g3 @ self._corr)
        return grad

    def gradient_rows(self, U) -> np.ndarray:
        U = np.asarray(U, dtype=float)
        X = np.tile(self._template, (U.shape[0], 1))
        X[:, self.free_index] = U
        return self.full_gradient_rows(self.problem.lagrangian, X)[:, self.free_index]

    def objective(self, unknowns) -> float:
        return self.integral(self.problem.lagrangian, self.full(unknowns))

    def gradient(self, unknowns) -> np.ndarray:
        x = self.full(unknowns)
        return self.full_gradient(self.problem.lagrangian, x)[self.free_index]


def linear_seed(problem: VariationalProblem, grid: Grid) -> np.ndarray:
    """Straight line through the boundary data; free ends copy the other end or use 0."""
    bc = problem.boundary[0]
    left, right = bc.left, bc.right
    if left is None:
        left = right if right is not None else 0.0
    if right is None:
        right = left
    t = grid.nodes
    return left + (right - left) * (t - grid.a) / (grid.b - grid.a)


def _jacobian(F: Callable, u: np.ndarray, f0: np.ndarray, batch: Callable | None = None) -> np.ndarray:
    """Central-difference Jacobian of ``F`` at ``u``.

    ``batch`` maps a matrix of points (one per row) to the matrix of ``F``
    values; when given, all probes are evaluated in one call.
    """
    steps = _EPS ** (1.0 / 3.0) * np.maximum(1.0, np.abs(u))
    up = u + np.diag(steps)
    dn = u - np.diag(steps)
    actual = np.diag(up) - np.diag(dn)
    if batch is not None:
        try:
            vals = batch(np.vstack([up, dn]))
            if np.all(np.isfinite(vals)):
                m = len(u)
                return ((vals[:m] - vals[m:]) / actual[:, None]).T
        except (EvaluationError, FloatingPointError, ValueError):
            pass  # some probe left L's domain; fall back to column-by-column
    J = np.empty((len(f0), len(u)))
    for j in range(len(u)):
        J[:, j] = (F(up[j]) - F(dn[j])) / actual[j]
    return J


def _safe_norm(F, u):
    try:
        r = F(u)
    except (EvaluationError, FloatingPointError, ValueError):
        return None, math.inf
    if not np.all(np.isfinite(r)):
        return None, math.inf
    return r, float(np.max(np.abs(r)))


def _newton(F: Callable, u0: np.ndarray, opts: SolverOptions):
    """Damped Newton on ``F(u) = 0`` with merit ``max |F|``.

    Returns ``(u, iterations, residual_norm, converged, message)``.
    """
    u = np.array(u0, dtype=float)
    r, norm = _safe_norm(F, u)
    if r is None:
        return u, 0, norm, False, "residual not finite at the initial guess"
    it = 0
    while True:
        if norm <= opts.tol:
            return u, it, norm, True, "converged"
        if it >= opts.max_iter:
            return u, it, norm, False, f"iteration cap {opts.max_iter} reached"
        it += 1
        J = _jacobian(F, u, r)
        directions = []
        try:
            step = np.linalg.solve(J, -r)
            if np.all(np.isfinite(step)):
                directions.append(step)
        except np.linalg.LinAlgError:
            pass
        accepted = False
        for step in directions:
            s = 1.0
            for _ in range(opts.damping_max + 1):
                r_try, n_try = _safe_norm(F, u + s * step)
                if n_try < norm:
                    u, r, norm = u + s * step, r_try, n_try
                    accepted = True
                    break
                s *= 0.5
            if accepted:
                break
        if not accepted:
            # singular or non-descending Newton step: regularized Gauss-Newton steps
            JtJ = J.T @ J
            Jtr = J.T @ r
            scale = max(float(np.max(np.abs(np.diag(JtJ)))), _EPS)
            mu = 1e-12 * scale
            for _ in range(opts.damping_max + 1):
                step = np.linalg.solve(JtJ + mu * np.eye(len(u)), -Jtr)
                r_try, n_try = _safe_norm(F, u + step)
                if n_try < norm:
                    u, r, norm = u + step, r_try, n_try
                    accepted = True
                    break
                mu *= 10.0
        if not accepted:
            return u, it, norm, False, "line search exhausted without decreasing the residual"
        log.debug("newton iteration %d: residual %.3e", it, norm)


def _safe_value(f, u):
    try:
        v = f(u)
    except (EvaluationError, FloatingPointError, ValueError):
        return math.inf
    return v if math.isfinite(v) else math.inf


def _minimize(objective: Callable, gradient: Callable, u0: np.ndarray, opts: SolverOptions,
              gradient_rows: Callable | None = None):
    """Newton on ``grad = 0`` for a minimization problem.

    The finite-difference Hessian is shifted by ``mu I`` until it is positive
    definite, and steps are halved until ``Psi`` decreases (Armijo) or, once
    ``Psi`` is flat to rounding, until the gradient norm decreases.
    Returns ``(u, iterations, gradient_norm, converged, message)``.
    """
    u = np.array(u0, dtype=float)
    psi = _safe_value(objective, u)
    g, gnorm = _safe_norm(gradient, u)
    if g is None or not math.isfinite(psi):
        return u, 0, math.inf, False, "objective not finite at the initial guess"
    it = 0
    while True:
        if gnorm <= opts.tol:
            return u, it, gnorm, True, "converged"
        if it >= opts.max_iter:
            return u, it, gnorm, False, f"iteration cap {opts.max_iter} reached"
        it += 1
        H = _jacobian(gradient, u, g, gradient_rows)
        H = 0.5 * (H + H.T)
        scale = max(float(np.max(np.abs(np.diag(H)))), _EPS)
        mu = 0.0
        step = None
        for _ in range(60):
            try:
                c = np.linalg.cholesky(H + mu * np.eye(len(u)))
            except np.linalg.LinAlgError:
                mu = max(10.0 * mu, 1e-10 * scale)
                continue
            step = -np.linalg.solve(c.T, np.linalg.solve(c, g))
            break
        if step is None or not np.all(np.isfinite(step)):
            return u, it, gnorm, False, "could not regularize the Hessian"
        slope = float(g @ step)
        flat = 10.0 * _EPS * max(1.0, abs(psi))
        s = 1.0
        accepted = False
        for _ in range(opts.damping_max + 1):
            trial = u + s * step
            psi_t = _safe_value(objective, trial)
            if psi_t <= psi + 1e-4 * s * slope:
                accepted = True
            elif psi_t <= psi + flat:
                g_t, n_t = _safe_norm(gradient, trial)
                accepted = n_t < gnorm
            if accepted:
                break
            s *= 0.5
        if not accepted:
            return u, it, gnorm, False, "line search exhausted without progress"
        u = trial
        psi = psi_t
        g, gnorm = _safe_norm(gradient, u)
        if g is None:
            return u, it, math.inf, False, "gradient not finite"
        log.debug("iteration %d: psi %.12e, |grad| %.3e, shift %.1e, step %.3g", it, psi, gnorm, mu, s)


def solve(problem: VariationalProblem, n: int, options: SolverOptions | None = None) -> SolveReport:
    """Minimize the discretized functional of a scalar problem on ``n`` cells.

    Isoperimetric constraints add the multiplier as an extra unknown and the
    constraint ``G(x) = K`` as an extra equation, with ``F = L + lambda M`` in
    the gradient.
    """
    opts = options or SolverOptions()
    disc = DiscretizedObjective(problem, n)
    L = problem.lagrangian
    x0 = linear_seed(problem, disc.grid) if opts.seed is None else np.asarray(opts.seed, float)
    if x0.shape != (n + 1,):
        raise ValueError(f"seed must have {n + 1} samples, got shape {x0.shape}")
    u0 = disc.restrict(x0)
    constraint = problem.constraint
    multiplier = None
    violation = None
    abnormal = False

    if isinstance(constraint, IsoperimetricConstraint):
        M, K = constraint.integrand, constraint.level

        def system(z):
            x = disc.full(z[:-1])
            lam = z[-1]
            g = disc.full_gradient(L, x) + lam * disc.full_gradient(M, x)
            return np.append(g[disc.free_index], disc.integral(M, x) - K)

        z, iters, norm, ok, msg = _newton(system, np.append(u0, 0.0), opts)
        u, multiplier = z[:-1], float(z[-1])
        x = disc.full(u)
        violation = abs(disc.integral(M, x) - K)
        m_norm = float(np.max(np.abs(disc.full_gradient(M, x)[disc.free_index])))
        l_norm = float(np.max(np.abs(disc.full_gradient(L, x)[disc.free_index])))
        # where M is stationary the constraint pins x only to about sqrt(tol),
        # and in the truly abnormal case lambda diverges so ok may be False
        abnormal = m_norm <= math.sqrt(opts.tol) * max(1.0, l_norm)
    elif constraint is None:
        u, iters, norm, ok, msg = _minimize(disc.objective, disc.gradient, u0, opts, disc.gradient_rows)
        x = disc.full(u)
    else:
        raise ValueError("the direct solver does not handle holonomic constraints")

    try:
        value = disc.integral(L, x)
    except EvaluationError:
        value = math.nan
    if not np.all(np.isfinite(x)):
        raise EvaluationError("solver produced non-finite node values")
    return SolveReport(
        trajectory=Trajectory.from_values(disc.grid, x),
        iterations=iters,
        gradient_norm=norm,
        objective_value=value,
        converged=ok,
        multiplier=multiplier,
        constraint_violation=violation,
        possibly_abnormal=abnormal,
        message=msg,
    )


def solve_penalty(problem: VariationalProblem, n: int, weight: float = 1e6,
                  options: SolverOptions | None = None) -> SolveReport:
    """Quadratic-penalty alternative for isoperimetric problems.

    Minimizes ``Psi(x) + weight * (G(x) - K)^2`` without a multiplier unknown.
    Kept as an independent check of the bordered solve.
    """
    constraint = problem.constraint
    if not isinstance(constraint, IsoperimetricConstraint):
        raise ValueError("solve_penalty needs an isoperimetric problem")
    opts = options or SolverOptions()
    disc = DiscretizedObjective(problem, n)
    L, M, K = problem.lagrangian, constraint.integrand, constraint.level

    def value(u):
        x = disc.full(u)
        return disc.integral(L, x) + weight * (disc.integral(M, x) - K) ** 2

    def grad(u):
        x = disc.full(u)
        g = disc.full_gradient(L, x) + 2.0 * weight * (disc.integral(M, x) - K) * disc.full_gradient(M, x)
        return g[disc.free_index]

    x0 = linear_seed(problem, disc.grid) if opts.seed is None else np.asarray(opts.seed, float)
    # the penalized gradient scales with the weight, so scale the tolerance too
    scaled = SolverOptions(opts.tol * max(1.0, weight), opts.max_iter, opts.damping_max)
    u, iters, norm, ok, msg = _minimize(value, grad, disc.restrict(x0), scaled)
    x = disc.full(u)
    return SolveReport(
        trajectory=Trajectory.from_values(disc.grid, x),
        iterations=iters,
        gradient_norm=norm,
        objective_value=disc.integral(L, x),
        converged=ok,
        constraint_violation=abs(disc.integral(M, x) - K),
        message=msg,
    )


@dataclass(frozen=True)
class ConvergenceRow:
    n: int
    error: float
    order: float
    converged: bool
    message: str = ""
    is_reference: bool = False


def convergence_study(
    problem: VariationalProblem,
    n_list: Sequence[int],
    reference: Union[None, str, Callable] = None,
    options: SolverOptions | None = None,
) -> list[ConvergenceRow]:
    """Solve on each grid and tabulate the max nodal error against a reference.

    ``reference`` is a callable ``x(t)``, ``"finest"`` (the solution on the
    largest ``n``, linearly interpolated) or ``None`` to use
    ``problem.reference``. The order column compares each row with the next:
    ``log(e_i / e_{i+1}) / log(n_{i+1} / n_i)``.
    """
    ns = [int(n) for n in n_list]
    if not ns:
        raise ValueError("n_list must not be empty")
    if reference is None:
        reference = problem.reference
        if reference is None:
            raise ValueError(f"problem {problem.name!r} has no analytic reference; use 'finest'")
    finest_n = max(ns)
    reports = {}
    for n in sorted(set(ns)):
        try:
            reports[n] = solve(problem, n, options)
        except (EvaluationError, ValueError, np.linalg.LinAlgError) as exc:
            reports[n] = exc

    if reference == "finest":
        if len(set(ns)) < 2:
            raise ValueError("a finest-grid reference needs at least two distinct grids")
        ref_report = reports[finest_n]
        if isinstance(ref_report, Exception) or not ref_report.converged:
            raise RuntimeError(f"the reference solve at n={finest_n} failed")
        t_ref, x_ref = ref_report.trajectory.t, ref_report.trajectory.x

        def reference(t):
            return np.interp(t, t_ref, x_ref)
        ref_is_finest = True
    else:
        ref_is_finest = False

    errors = []
    rows = []
    for n in ns:
        rep = reports[n]
        if isinstance(rep, Exception):
            rows.append((n, math.nan, False, f"solver error: {rep}", False))
            continue
        err = float(np.max(np.abs(rep.trajectory.x - reference(rep.trajectory.t))))
        rows.append((n, err, rep.converged, rep.message, ref_is_finest and n == finest_n))
    for i, (n, err, ok, msg, is_ref) in enumerate(rows):
        order = math.nan
        if i + 1 < len(rows):
            n2, e2 = rows[i + 1][0], rows[i + 1][1]
            if err > 0 and e2 > 0 and n2 != n and math.isfinite(err) and math.isfinite(e2):
                order = math.log(err / e2) / math.log(n2 / n)
        errors.append(ConvergenceRow(n, err, order, ok, msg, is_ref))
    return errors
