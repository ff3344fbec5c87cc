import os

import numpy as np
import pytest

from lzanomaly import _kernels
from lzanomaly.model import encode, new_model, train

DATA = os.path.join(os.path.dirname(__file__), "data")
WORKED_TEXT = "aabdbbacbbda"
ABCD = "abcd"

# filled by test_acceptance; printed after the run
ACCEPTANCE_RESULTS = {}


@pytest.fixture
def worked_model():
    return train(new_model(4), [encode(WORKED_TEXT, ABCD)])


@pytest.fixture
def enc():
    return lambda text: encode(text, ABCD)


@pytest.fixture(params=["numba", "numpy"])
def backend(request):
    if request.param == "numba" and _kernels.numba is None:
        pytest.skip("numba not installed")
    previous = _kernels.active.name
    _kernels.set_backend(request.param)
    yield request.param
    _kernels.set_backend(previous)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE_RESULTS):
        status, line = ACCEPTANCE_RESULTS[num]
        terminalreporter.write_line(f"[{status}] criterion {num}: {line}")
