import math

import numpy as np
import pytest

from mkf.expand import RandomVectorSpec


def pytest_addoption(parser):
    parser.addoption(
        "--mrclam-dir",
        default=None,
        help="directory holding one robot's MRCLAM files (enables the real-data check)",
    )


@pytest.fixture
def mrclam_dir(request):
    return request.config.getoption("--mrclam-dir")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def rv_pair():
    return RandomVectorSpec.gaussian(["x", "th"], [10.0, math.pi / 3], [[5.0, 1.5], [1.5, math.pi / 6]])


@pytest.fixture(scope="session")
def rv_triple():
    cov = [[3.0, 0.5, 0.5], [0.5, 2.0, 0.3], [0.5, 0.3, math.pi / 10]]
    return RandomVectorSpec.gaussian(["x", "y", "th"], [10.0, 5.0, math.pi / 3], cov)


_ACCEPTANCE: dict = {}


@pytest.fixture
def acceptance():
    """Record ``(criterion, passed, detail)``; summarized at the end of the run."""

    def record(criterion, passed, detail):
        status = "SKIP" if passed is None else ("PASS" if passed else "FAIL")
        line = f"criterion {criterion}: {status}  {detail}"
        _ACCEPTANCE[str(criterion)] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for key in sorted(_ACCEPTANCE, key=lambda k: (int("".join(c for c in k if c.isdigit())), k)):
        terminalreporter.write_line(_ACCEPTANCE[key])
