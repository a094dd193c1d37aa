import numpy as np
import pytest

from deepspoc import _accel


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


BACKENDS = ["numpy"] + (["numba"] if _accel.HAVE_NUMBA else [])


def pytest_terminal_summary(terminalreporter):
    from _verdicts import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(LINES, key=lambda item: item[0]):
            terminalreporter.write_line(line)
