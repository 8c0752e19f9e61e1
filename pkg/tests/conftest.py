import numpy as np
import pytest

from polydetect.channel_models import draw_angle_intervals, make_jakes_profile

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line per acceptance criterion; printed in the terminal summary."""
    def add(criterion: int, passed: bool, detail: str) -> None:
        line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'} {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
    return add


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def jakes_intervals():
    """Six fixed angle intervals shared by the convergence tests."""
    return draw_angle_intervals(6, (0, 0))


@pytest.fixture(scope="session")
def jakes_256(jakes_intervals):
    return make_jakes_profile(256, 102, jakes_intervals, seed=(0, 0))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
