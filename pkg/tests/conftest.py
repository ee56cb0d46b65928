import functools
import os

import pytest

from rieszflow import RadialGrid, build_operator

# operators are deterministic and read-only, so one copy serves the whole session
os.environ.pop("RIESZFLOW_CACHE", None)


@functools.lru_cache(maxsize=None)
def operator(N, n, R_dom, a, exterior=True):
    return build_operator(RadialGrid(N, n, R_dom), a, exterior=exterior)


@pytest.fixture(scope="session")
def op_cache():
    return operator


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
