import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def decaying_matrix(rng, n1, n2, decay=0.5, rank=None):
    """Random matrix with singular values ``decay**i``."""
    k = min(n1, n2) if rank is None else rank
    U = np.linalg.qr(rng.standard_normal((n1, k)))[0]
    V = np.linalg.qr(rng.standard_normal((n2, k)))[0]
    return (U * decay ** np.arange(k)) @ V.T


ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Collects one summary line per acceptance criterion."""

    def emit(number, ok, detail):
        line = f"ACCEPTANCE {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
