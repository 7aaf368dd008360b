from __future__ import annotations

import pytest

from growthfrag import KernelSpec, ProblemSpec, RateSpec


def first_example(tau0=1.0, beta0=1.0, kernel=None):
    return ProblemSpec(RateSpec.constant(tau0), RateSpec.linear(beta0), kernel or KernelSpec.uniform())


def linear_growth(n, tau0=1.0, beta0=1.0):
    return ProblemSpec(RateSpec.linear(tau0), RateSpec.power(beta0, n), KernelSpec.uniform())


@pytest.fixture
def ex1():
    return first_example()


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
