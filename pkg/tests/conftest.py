import numpy as np
import pytest

from heraldsim.fock import DensityMatrix, random_density

_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_log():
    """Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_qubit_state(rng, dim=6) -> DensityMatrix:
    """Random mixed state supported on {|0>, |1>}."""
    return random_density(dim, rng=rng, support=2)


def brute_partial_trace(data, dim, keep):
    out = np.zeros((dim, dim), dtype=complex)
    for a in range(dim):
        for b in range(dim):
            total = 0j
            for k in range(dim):
                if keep == "signal":
                    total += data[k * dim + a, k * dim + b]
                else:
                    total += data[a * dim + k, b * dim + k]
            out[a, b] = total
    return out
