import numpy as np
import pytest
from conftest import scalar_problem

from fracvar.direct import (
    DiscretizedObjective,
    SolverOptions,
    Trajectory,
    convergence_study,
    linear_seed,
    solve,
    solve_penalty,
)
from fracvar.expression import EvaluationError
from fracvar.fracops import Grid
from fracvar.problems import (
    BoundaryCondition,
    IsoperimetricConstraint,
    Lagrangian,
    VariationalProblem,
    builtin,
)


def fd_gradient(disc, u, rel=1e-6):
    g = np.empty_like(u)
    for i in range(len(u)):
        s = rel * max(1.0, abs(u[i]))
        up, dn = u.copy(), u.copy()
        up[i] += s
        dn[i] -= s
        g[i] = (disc.objective(up) - disc.objective(dn)) / (up[i] - dn[i])
    return g


def isoperimetric_problem(level=0.6):
    return scalar_problem(
        "d^2", constraint=IsoperimetricConstraint(Lagrangian.from_expression("x"), level)
    )


# --- objective -----------------------------------------------------------------


def test_objective_of_constant_lagrangian():
    p = scalar_problem("1 + 0*x")
    disc = DiscretizedObjective(p, 37)
    assert disc.objective(np.zeros(disc.size)) == pytest.approx(1.0, rel=1e-14)


def test_objective_example1_exact_samples_decreasing():
    p = builtin("example1")
    values = []
    for n in (25, 50, 100, 200):
        disc = DiscretizedObjective(p, n)
        values.append(disc.objective(disc.restrict(disc.grid.nodes**2)))
    assert all(v >= 0 for v in values)
    assert all(v1 > v2 for v1, v2 in zip(values, values[1:]))


def test_objective_of_constant_trajectory_shrinks():
    # D of a constant is O(h / t_j) near t_j, so Psi for L = d^2 decays like h^(1 - 2 alpha)
    p = scalar_problem("d^2", alpha=0.25, left=1.0, right=1.0)
    vals = [DiscretizedObjective(p, n).objective(np.ones(n - 1)) for n in (50, 100, 200, 400)]
    assert all(v1 > v2 for v1, v2 in zip(vals, vals[1:]))
    for v1, v2 in zip(vals, vals[1:]):
        assert v1 / v2 == pytest.approx(np.sqrt(2), rel=0.05)


def test_objective_rejects_wrong_length():
    disc = DiscretizedObjective(builtin("example1"), 10)
    with pytest.raises(ValueError):
        disc.objective(np.zeros(3))


def test_objective_propagates_domain_error():
    p = scalar_problem("ln(x)", left=1.0, right=1.0)
    disc = DiscretizedObjective(p, 10)
    with pytest.raises(EvaluationError):
        disc.objective(np.full(disc.size, -1.0))


# --- gradient ------------------------------------------------------------------


@pytest.mark.parametrize("name", ["example1", "example2"])
def test_gradient_matches_finite_differences(name, rng):
    disc = DiscretizedObjective(builtin(name), 20)
    for _ in range(3):
        seed = linear_seed(disc.problem, disc.grid)
        u = disc.restrict(seed) + rng.normal(scale=0.3 * (1 + np.abs(disc.restrict(seed))))
        g, ref = disc.gradient(u), fd_gradient(disc, u)
        assert np.max(np.abs(g - ref)) <= 1e-6 * np.max(np.abs(ref))


def test_gradient_with_free_endpoints(rng):
    p = scalar_problem("(d - 1)^2 + t*x^2", left=None, right=None)
    disc = DiscretizedObjective(p, 20)
    assert disc.size == 21
    u = rng.normal(size=disc.size)
    ref = fd_gradient(disc, u)
    assert np.max(np.abs(disc.gradient(u) - ref)) <= 1e-6 * np.max(np.abs(ref))


def test_gradient_of_lagrangian_without_x_or_d():
    p = scalar_problem("t^2 + 3")
    disc = DiscretizedObjective(p, 15)
    assert np.all(disc.gradient(np.linspace(-1, 1, disc.size)) == 0.0)


def test_direct_rejects_vector_problems():
    L = Lagrangian.from_expression("d1^2 + d2^2", ("x1", "x2", "d1", "d2"))
    p = VariationalProblem(0, 1, (0.5, 0.5), L, (BoundaryCondition(0, 1), BoundaryCondition(0, 1)))
    with pytest.raises(ValueError, match="scalar"):
        DiscretizedObjective(p, 10)


# --- solve ---------------------------------------------------------------------


def test_zero_boundary_gives_zero_solution():
    r = solve(scalar_problem("d^2", right=0.0), 50)
    assert r.converged
    assert np.max(np.abs(r.trajectory.x)) < 1e-8


def test_classical_limit_is_straight_line():
    r = solve(scalar_problem("d^2", alpha=0.99), 100)
    assert r.converged
    assert np.max(np.abs(r.trajectory.x - r.trajectory.t)) < 0.05


def test_example1_newton_at_most_two_iterations():
    r = solve(builtin("example1"), 100)
    assert r.converged and r.iterations <= 2
    assert r.gradient_norm <= 1e-9
    assert r.trajectory.x[0] == 0.0 and r.trajectory.x[-1] == 100.0


def test_example1_from_any_seed(rng):
    seed = rng.normal(scale=50, size=51)
    r = solve(builtin("example1"), 50, SolverOptions(seed=seed))
    ref = solve(builtin("example1"), 50)
    assert r.converged and r.iterations <= 2
    assert np.max(np.abs(r.trajectory.x - ref.trajectory.x)) < 1e-8


@pytest.mark.parametrize("factor", [0.1, 10.0])
@pytest.mark.parametrize(
    "problem",
    [builtin("example1"), scalar_problem("(d - t)^2 + x^2", alpha=0.7, right=None)],
    ids=["example1", "free-right"],
)
def test_solution_invariant_under_scaling(problem, factor):
    base = solve(problem, 60)
    scaled = solve(problem.with_lagrangian(problem.lagrangian.scaled(factor)), 60)
    assert base.converged and scaled.converged
    assert np.max(np.abs(base.trajectory.x - scaled.trajectory.x)) < 1e-9


def test_boundary_values_bit_exact():
    p = scalar_problem("d^2 + x^2", left=0.1, right=0.7)
    x = solve(p, 33).trajectory.x
    assert x[0] == 0.1 and x[-1] == 0.7


def test_free_right_endpoint_solution():
    # D x = 1 is attainable: x = t^alpha / Gamma(1 + alpha), Psi -> 0
    p = scalar_problem("(d - 1)^2", right=None)
    r = solve(p, 200)
    assert r.converged
    assert r.objective_value < 1e-6


def test_non_convergence_is_reported():
    r = solve(builtin("example2"), 30, SolverOptions(max_iter=1))
    assert not r.converged
    assert r.iterations == 1
    assert r.gradient_norm > 1e-9
    assert r.message


def test_seed_shape_checked():
    with pytest.raises(ValueError, match="seed"):
        solve(builtin("example1"), 10, SolverOptions(seed=np.zeros(5)))


def test_trajectory_validation():
    g = Grid(0, 1, 4)
    t = Trajectory.from_function(g, lambda s: s**2)
    assert np.allclose(t.x, g.nodes**2)
    with pytest.raises(ValueError):
        Trajectory.from_values(g, [0.0, 1.0])


# --- isoperimetric -------------------------------------------------------------


def test_isoperimetric_constraint_satisfied():
    r = solve(isoperimetric_problem(), 40)
    assert r.converged
    assert r.constraint_violation <= 1e-6
    assert r.multiplier is not None and np.isfinite(r.multiplier)
    assert not r.possibly_abnormal


def test_isoperimetric_matches_penalty_oracle():
    p = isoperimetric_problem()
    bordered = solve(p, 40)
    penalty = solve_penalty(p, 40, weight=1e6)
    assert penalty.converged
    assert np.max(np.abs(bordered.trajectory.x - penalty.trajectory.x)) < 1e-2


def test_inactive_constraint_gives_zero_multiplier():
    # the unconstrained minimizer already meets the level
    free = solve(scalar_problem("d^2"), 30)
    disc = DiscretizedObjective(scalar_problem("d^2"), 30)
    level = disc.integral(Lagrangian.from_expression("x"), free.trajectory.x)
    r = solve(isoperimetric_problem(level), 30)
    assert abs(r.multiplier) < 1e-6
    assert np.max(np.abs(r.trajectory.x - free.trajectory.x)) < 1e-6


def test_abnormal_constraint_flagged():
    # K = min G for M = d^2: M is stationary at the only feasible point
    n = 20
    gmin = solve(scalar_problem("d^2"), n).objective_value
    con = IsoperimetricConstraint(Lagrangian.from_expression("d^2"), gmin)
    assert solve(scalar_problem("d^2", constraint=con), n).possibly_abnormal
    # lambda diverges here, so the solve itself need not converge
    assert solve(scalar_problem("(d - 1)^2", constraint=con), n).possibly_abnormal


def test_penalty_needs_isoperimetric_problem():
    with pytest.raises(ValueError):
        solve_penalty(builtin("example1"), 10)


# --- convergence study ---------------------------------------------------------


def test_convergence_study_example1():
    rows = convergence_study(builtin("example1"), [10, 50, 100, 200])
    errs = [r.error for r in rows]
    assert all(r.converged for r in rows)
    assert all(e1 > e2 for e1, e2 in zip(errs, errs[1:]))
    assert 1.6 <= errs[2] / errs[3] <= 2.4
    assert rows[2].order == pytest.approx(np.log(errs[2] / errs[3]) / np.log(2))
    assert np.isnan(rows[-1].order)


def test_seeded_at_exact_solution_error_not_zero():
    p = builtin("example1")
    n = 40
    seed = Grid(p.a, p.b, n).nodes ** 2
    (row,) = convergence_study(p, [n], options=SolverOptions(seed=seed))
    assert row.converged
    assert row.error > 0.1


def test_convergence_study_finest_reference():
    rows = convergence_study(builtin("example1"), [25, 50, 100], reference="finest")
    assert rows[-1].is_reference and rows[-1].error == 0.0
    assert rows[0].error > rows[1].error > 0


def test_convergence_study_needs_reference():
    with pytest.raises(ValueError, match="reference"):
        convergence_study(builtin("example2"), [10, 20])
    with pytest.raises(ValueError, match="two distinct"):
        convergence_study(builtin("example1"), [10, 10], reference="finest")
    with pytest.raises(ValueError):
        convergence_study(builtin("example1"), [])


def test_convergence_study_marks_failed_rows():
    rows = convergence_study(
        builtin("example2"), [10, 20], reference=lambda t: t, options=SolverOptions(max_iter=1)
    )
    assert not any(r.converged for r in rows)
    assert all(np.isfinite(r.error) for r in rows)


def test_convergence_study_marks_solver_errors():
    p = scalar_problem("ln(x) + d^2", left=1.0, right=-1.0)
    (row,) = convergence_study(p, [10], reference=lambda t: t)
    assert not row.converged
    assert "not finite" in row.message
    (row,) = convergence_study(builtin("example1"), [10], options=SolverOptions(seed=np.zeros(3)))
    assert not row.converged
    assert np.isnan(row.error)
    assert "solver error" in row.message
