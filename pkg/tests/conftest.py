import numpy as np
import pytest

from rrgff.graphgen import from_edges

PETERSEN_EDGES = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0),
                  (0, 5), (1, 6), (2, 7), (3, 8), (4, 9),
                  (5, 7), (7, 9), (9, 6), (6, 8), (8, 5)]


@pytest.fixture
def petersen():
    return from_edges(10, PETERSEN_EDGES)


@pytest.fixture
def k4():
    return from_edges(4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)])


@pytest.fixture
def two_k4():
    e = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    return from_edges(8, e + [(u + 4, v + 4) for u, v in e])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = {}


def record(number: int, ok: bool, detail: str) -> bool:
    """Store an acceptance outcome; printed after the run."""
    ACCEPTANCE[number] = (bool(ok), detail)
    return bool(ok)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
