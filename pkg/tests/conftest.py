import numpy as np
import pytest

from qmaxwell.torus import FieldSample, build_grid

# (number, title, passed, detail) rows collected by the acceptance suite.
ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(ACCEPTANCE_RESULTS):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {number:>2} {status}  {title}: {detail}")


@pytest.fixture(scope="session")
def record():
    """Store one acceptance verdict for the terminal summary and return it."""

    def _record(number, title, passed, detail):
        ACCEPTANCE_RESULTS.append((number, title, bool(passed), detail))
        return bool(passed)

    return _record


@pytest.fixture
def grid16():
    return build_grid(16)


@pytest.fixture
def cosine_density(grid16):
    return FieldSample(grid16, 1.0 + 0.3 * np.cos(2 * np.pi * grid16.nodes))
