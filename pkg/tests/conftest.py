import numpy as np
import pytest

from postlasso.harness.data import DesignSpec, generate_dataset
from postlasso.lasso import fit_lasso, lambda_max
from postlasso.linalg import build_active_geometry, build_design_context

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_problem(n=30, p=60, seed=0, design="identity", frac=0.3, s0=5):
    """Design context, response, lambda and its lasso fit."""
    data = generate_dataset(DesignSpec(design, n, p, tuple(range(s0)), seed=seed))
    ctx = build_design_context(data.X)
    lam = frac * lambda_max(data.X, data.y)
    return ctx, data.y, lam, fit_lasso(ctx, data.y, lam), data


@pytest.fixture(scope="session")
def problem():
    ctx, y, lam, sol, data = make_problem(seed=3)
    assert sol.A.size >= 2
    return ctx, y, lam, sol, data, build_active_geometry(ctx, sol.A)
