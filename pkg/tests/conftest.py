import numpy as np
import pytest

from bridgekit import DensePathMeasure, MarkovPathMeasure, StateSpace, TimeGrid

#: filled by test_acceptance: (criterion, passed, detail)
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in sorted(ACCEPTANCE, key=lambda r: int(r[0].split()[0])):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


def dense(w, n=None):
    w = np.asarray(w, float)
    n = n or w.shape[0]
    return DensePathMeasure(StateSpace.range(n), TimeGrid.uniform(w.ndim), w)


def chain(init, kernels):
    init = np.asarray(init, float)
    return MarkovPathMeasure(StateSpace.range(len(init)), TimeGrid.uniform(len(kernels) + 1),
                             init, tuple(np.asarray(k, float) for k in kernels))


@pytest.fixture
def small_chain():
    return chain([0.6, 0.4], [[[0.7, 0.3], [0.2, 0.8]], [[0.5, 0.5], [0.1, 0.9]]])
