import numpy as np
import pytest

from czlemma.corpus import generate
from czlemma.czd import decompose
from czlemma.grid import GridSpec


@pytest.fixture(scope="session")
def hat_case():
    """The 1D hat ``max(0, 1 - 8|x - 1/2|)`` on 256 cells at alpha = 2, p = 1."""
    f = generate("hat1d", 256)
    return decompose(f, 2.0, 1.0)


@pytest.fixture(scope="session")
def gauss2d_case():
    f = generate("gauss-bump", 64, 2)
    return decompose(f, 2.0, 1.0)


def interval_mask(cells, a, b):
    """Cells of a 1D grid whose centers lie in ``(a, b)``."""
    x = GridSpec(1, cells).axis_centers(0)
    return (x > a) & (x < b)


# one PASS/FAIL line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
