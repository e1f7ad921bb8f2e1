import numpy as np
import pytest

from fracvar import BoundaryCondition, Lagrangian, VariationalProblem

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def record():
    """Collect one PASS/FAIL line per acceptance criterion."""

    def _record(label: str, passed: bool, detail: str = ""):
        line = f"{'PASS' if passed else 'FAIL'}  {label}" + (f"  ({detail})" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def scalar_problem(expr, alpha=0.5, a=0.0, b=1.0, left=0.0, right=1.0, **kw):
    return VariationalProblem(
        a, b, (alpha,), Lagrangian.from_expression(expr), (BoundaryCondition(left, right),), **kw
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
