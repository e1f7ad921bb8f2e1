"""Direct solver and condition auditor for fractional variational problems with Caputo derivatives."""

from .direct import (
    DiscretizedObjective,
    SolveReport,
    SolverOptions,
    Trajectory,
    convergence_study,
    solve,
    solve_penalty,
)
from .fracops import (
    FracOrder,
    Grid,
    SampledSignal,
    caputo_left,
    caputo_left_higher,
    caputo_right,
    gamma,
    gl_weights,
    rgamma,
    rl_right_derivative,
    rl_right_integral,
)
from .indirect import (
    ResidualReport,
    convexity_check,
    el_residual,
    higher_order_residual,
    holonomic_residual,
    isoperimetric_residual,
    legendre_check,
)
from .problems import (
    BoundaryCondition,
    HolonomicConstraint,
    IsoperimetricConstraint,
    Lagrangian,
    VariationalProblem,
    builtin,
    partial,
)

__version__ = "0.1.0"
