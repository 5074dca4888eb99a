import numpy as np
import pytest


def triple_loop_matmul(a, b):
    """Reference product: scalar float32 accumulation, k ascending."""
    a = np.asarray(a, dtype=np.float32)
    b = np.asarray(b, dtype=np.float32)
    n, m = a.shape
    p = b.shape[1]
    out = np.zeros((n, p), dtype=np.float32)
    for i in range(n):
        for j in range(p):
            acc = np.float32(0.0)
            for k in range(m):
                acc = np.float32(acc + np.float32(a[i, k] * b[k, j]))
            out[i, j] = acc
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
