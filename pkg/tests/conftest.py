import numpy as np
import pytest

from mbvoc import _accel, qmf

BACKENDS = ["numpy"] + (["numba"] if _accel.NUMBA_AVAILABLE else [])


@pytest.fixture(scope="session")
def bank4():
    return qmf.design_bank(4, 63)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


ACCEPTANCE_LINES = []


@pytest.fixture
def accept():
    """Record one acceptance line, then fail the test if the criterion is not met."""
    def record(label, ok, detail):
        line = f"criterion {label}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
