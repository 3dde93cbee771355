import numpy as np
import pytest

from hamlearn import pauli


@pytest.fixture
def rng():
    return np.random.default_rng(20260817)


def dense_commute(a: int, b: int, n: int) -> bool:
    ma, mb = pauli.pauli_matrix(a, n), pauli.pauli_matrix(b, n)
    return np.allclose(ma @ mb, mb @ ma)
