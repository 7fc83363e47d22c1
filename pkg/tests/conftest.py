import pytest

from randlegendre import dirichlet, multinomial, truncated_multinormal

import published as P

_acceptance_lines = []


def record_acceptance(criterion: str, passed: bool, detail: str = "") -> None:
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}"
    if detail:
        line += f": {detail}"
    _acceptance_lines.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def dirichlet_model():
    return dirichlet(P.DIRICHLET_ALPHAS)


@pytest.fixture(scope="session")
def multinomial_model():
    return multinomial(*P.MULTINOMIAL)


@pytest.fixture(scope="session")
def gaussian_model():
    return truncated_multinormal(P.GAUSSIAN_MU, P.GAUSSIAN_SIGMA, P.GAUSSIAN_WINDOW)
