import sys

import numpy as np
import pytest

from ttpinv.tt import TTMatrix, TTVector


def random_ranks(rng, N, rmax):
    return [1] + [int(r) for r in rng.integers(1, rmax + 1, size=N - 1)] + [1]


def random_ttvector(rng, modes, ranks):
    return TTVector([rng.standard_normal((ranks[n], modes[n], ranks[n + 1])) for n in range(len(modes))])


def random_ttmatrix(rng, rows, cols, ranks):
    return TTMatrix(
        [rng.standard_normal((ranks[n], rows[n], cols[n], ranks[n + 1])) for n in range(len(rows))]
    )


def kron_dense_vector(T):
    """Dense vector of a TTVector by summing rank-one Kronecker terms explicitly."""
    cores = [np.asarray(c) for c in T.cores]
    N = len(cores)
    ranks = [1] + [c.shape[2] for c in cores]
    out = np.zeros(int(np.prod([c.shape[1] for c in cores])))
    for idx in np.ndindex(*ranks[1:N]):
        alpha = (0,) + idx + (0,)
        term = np.ones(1)
        for n in range(N):
            # little-endian: later sites vary slower, so they go on the left of kron
            term = np.kron(cores[n][alpha[n], :, alpha[n + 1]], term)
        out += term
    return out


def kron_dense_matrix(T):
    cores = [np.asarray(c) for c in T.cores]
    N = len(cores)
    ranks = [1] + [c.shape[3] for c in cores]
    m = int(np.prod([c.shape[1] for c in cores]))
    n_ = int(np.prod([c.shape[2] for c in cores]))
    out = np.zeros((m, n_))
    for idx in np.ndindex(*ranks[1:N]):
        alpha = (0,) + idx + (0,)
        term = np.ones((1, 1))
        for n in range(N):
            term = np.kron(cores[n][alpha[n], :, :, alpha[n + 1]], term)
        out += term
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[k])
