"""Shared fixtures and the acceptance summary printed after the run."""
import numpy as np
import pytest

from gprsparse import signal_model as sm
from gprsparse.data import normalize_columns

ACCEPTANCE = {}


def record(number, passed, detail):
    """Register the outcome of acceptance criterion ``number``."""
    ACCEPTANCE[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def dataset():
    """The default 926-column training set."""
    return sm.generate_dataset(seed=0)


@pytest.fixture(scope="session")
def test_dataset():
    """A held-out set drawn with an unrelated seed."""
    return sm.generate_dataset(seed=1000)


def random_dictionary(rng, M, K):
    return normalize_columns(rng.standard_normal((M, K)))[0]


def sparse_vector(rng, K, S, low=0.5, high=2.0):
    x = np.zeros(K)
    idx = rng.choice(K, size=S, replace=False)
    x[idx] = rng.uniform(low, high, S) * rng.choice((-1.0, 1.0), S)
    return x
