import numpy as np
import pytest

from mismatched_rd.problem import parse_spec

HAMMING = [[0, 1], [1, 0]]


@pytest.fixture
def matched():
    return parse_spec({"source": ["1/2", "1/2"], "cost_encoder": HAMMING, "cost_decoder": HAMMING})


@pytest.fixture
def opposed():
    return parse_spec(
        {"source": ["1/2", "1/2"], "cost_encoder": [[1, 0], [0, 1]], "cost_decoder": HAMMING}
    )


def random_instance(rng, U, W):
    pu = rng.dirichlet(np.ones(U))
    lam = rng.dirichlet(np.ones(W))
    return pu, lam, rng.random((U, W))


def binary_entropy(d):
    return -(d * np.log2(d) + (1 - d) * np.log2(1 - d))


def hamming_dr(R):
    """Inverse of R = 1 - H_b(D) on [0, 1/2] by bisection."""
    lo, hi = 0.0, 0.5
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if 1 - binary_entropy(mid) > R:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
